//! Embedding-space analytics over genre encodings and track signatures.

mod equations;
mod neighbors;
mod pca;

pub use equations::{equation_residual, find_genre_equations, GenreEquation};
pub use neighbors::{
    cosine_distance, euclidean_distance, genre_neighbors, recommend_tracks, Metric, NeighborList, Recommendation,
};
pub use pca::{jacobi_eigen, PcaModel};
