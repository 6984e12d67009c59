//! Substream and frame-type identifiers shared by the simulator, the
//! controller and the CSV ledger.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::Error;

/// The two lossy video substreams under rate control.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum VideoStream {
    Geometry,
    Color,
}

impl VideoStream {
    pub const ALL: [VideoStream; 2] = [VideoStream::Geometry, VideoStream::Color];

    pub fn as_str(self) -> &'static str {
        match self {
            VideoStream::Geometry => "geometry",
            VideoStream::Color => "color",
        }
    }
}

impl fmt::Display for VideoStream {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// All four substreams of a coded point cloud sequence. Occupancy and patch
/// information are coded losslessly and carry a constant bit cost.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Substream {
    Geometry,
    Color,
    Occ,
    Patch,
}

impl Substream {
    pub fn as_str(self) -> &'static str {
        match self {
            Substream::Geometry => "geometry",
            Substream::Color => "color",
            Substream::Occ => "occ",
            Substream::Patch => "patch",
        }
    }

    pub fn video(self) -> Option<VideoStream> {
        match self {
            Substream::Geometry => Some(VideoStream::Geometry),
            Substream::Color => Some(VideoStream::Color),
            Substream::Occ | Substream::Patch => None,
        }
    }
}

impl From<VideoStream> for Substream {
    fn from(s: VideoStream) -> Self {
        match s {
            VideoStream::Geometry => Substream::Geometry,
            VideoStream::Color => Substream::Color,
        }
    }
}

impl fmt::Display for Substream {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Substream {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "geometry" => Ok(Substream::Geometry),
            "color" => Ok(Substream::Color),
            "occ" => Ok(Substream::Occ),
            "patch" => Ok(Substream::Patch),
            other => Err(Error::Invalid(format!("unknown stream `{other}`"))),
        }
    }
}

/// Frame types of the IP coding structure: the near projection is intra
/// coded and the far projection is predicted from it.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum FrameType {
    I,
    P,
}

impl FrameType {
    /// Position of a video frame in the IPIP... structure.
    pub fn of_video_frame(frame_index: usize) -> FrameType {
        if frame_index.is_multiple_of(2) {
            FrameType::I
        } else {
            FrameType::P
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            FrameType::I => "I",
            FrameType::P => "P",
        }
    }
}

impl fmt::Display for FrameType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}
