//! Text encoding of per-frame feature sets and the server-side stream plumbing.
//!
//! Grammar, one LF-terminated line each:
//!
//! ```text
//! FRAME <idx>
//! CAM <camera id>
//! TS <seconds, 3dp>
//! OBJ <id, 3dp> SPEED=<3dp> DIRCH=<int> DWELL=<3dp> BBOX=<x0>,<y0>,<x1>,<y1>   (zero or more)
//! END <idx>
//! ```
//!
//! Objects appear in ascending id order and every real has exactly three decimals, so the
//! encoding of a frame is unique.

pub(crate) mod codec;
mod hub;
mod session;

pub use codec::{
    decode_frame, encode_frame, is_valid_camera_id, Decoded, DecodeError, DecodedFrame, FrameDecoder, WireError,
    MAX_BLOCK_BYTES,
};
pub use hub::{EncodedFrame, FeatureHub, Next, Subscription};
pub use session::{SessionError, SessionId, SessionRegistry, SessionState, StreamSession};
