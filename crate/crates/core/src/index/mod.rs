pub mod archive;
pub mod celltree;
pub mod equalize;
pub mod hilbert;
pub mod kdtree;

pub use archive::*;
pub use celltree::*;
pub use equalize::*;
pub use hilbert::*;
pub use kdtree::*;
