//! Multi-scale underwater feature dictionary.

pub mod build;
pub mod cluster;
pub mod io;
pub mod metrics;
pub mod patches;
pub mod select;

pub use build::{build_dictionary, build_to_files, list_images, load_corpus, BuildConfig, BuildOutput, DiversityReport, DiversityRow};
pub use cluster::{reduce_and_cluster, ClusterOutput, KMeansConfig};
pub use io::{load_dictionary, load_for_encode, save_dictionary, DictScale, EntryPriors, FeatureDictionary};
pub use metrics::{compute_cf, compute_si};
pub use patches::{crop_patches, PatchSet, SourceId};
pub use select::{select_representatives, Selection};
