//! Deterministic content-derived identifiers for graph elements.
//!
//! Node and edge ids are truncated SHA-256 digests over length-prefixed key
//! fields, so replaying the same provenance always lands on the same ids.

use alloc::string::String;
use core::fmt;
use core::str::FromStr;

use serde::de::{self, Deserializer, Visitor};
use serde::{Deserialize, Serialize, Serializer};
use sha2::{Digest, Sha256};

use crate::model::EdgeKind;

const ID_LEN: usize = 16;

macro_rules! digest_id {
    ($(#[$meta:meta])* $name:ident) => {
        $(#[$meta])*
        #[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
        pub struct $name([u8; ID_LEN]);

        impl $name {
            pub const MIN: Self = Self([0; ID_LEN]);
            pub const MAX: Self = Self([0xff; ID_LEN]);

            pub fn from_bytes(bytes: [u8; ID_LEN]) -> Self {
                Self(bytes)
            }

            pub fn as_bytes(&self) -> &[u8; ID_LEN] {
                &self.0
            }
        }

        impl fmt::Display for $name {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                for b in &self.0 {
                    write!(f, "{:02x}", b)?;
                }
                Ok(())
            }
        }

        impl fmt::Debug for $name {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                write!(f, "{}({})", stringify!($name), self)
            }
        }

        impl FromStr for $name {
            type Err = ParseIdError;

            fn from_str(s: &str) -> Result<Self, Self::Err> {
                let raw = s.as_bytes();
                if raw.len() != ID_LEN * 2 {
                    return Err(ParseIdError);
                }
                let mut out = [0u8; ID_LEN];
                for (i, pair) in raw.chunks_exact(2).enumerate() {
                    out[i] = (hex_val(pair[0])? << 4) | hex_val(pair[1])?;
                }
                Ok(Self(out))
            }
        }

        impl Serialize for $name {
            fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
                serializer.collect_str(self)
            }
        }

        impl<'de> Deserialize<'de> for $name {
            fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
                struct IdVisitor;
                impl Visitor<'_> for IdVisitor {
                    type Value = $name;
                    fn expecting(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                        f.write_str("a 32-character lowercase hex id")
                    }
                    fn visit_str<E: de::Error>(self, v: &str) -> Result<$name, E> {
                        v.parse().map_err(|_| E::invalid_value(de::Unexpected::Str(v), &self))
                    }
                }
                deserializer.deserialize_str(IdVisitor)
            }
        }
    };
}

digest_id!(
    /// Store-wide node key. Entities hash `(type_label, identity)`, activities
    /// hash `(workflow_execution_id, task_id)`.
    NodeId
);
digest_id!(
    /// Edge key; a hash of `(kind, src, dst)`, so parallel duplicates collapse.
    EdgeId
);

#[derive(Debug, Clone, Copy, PartialEq, Eq, thiserror::Error)]
#[error("malformed identifier")]
pub struct ParseIdError;

fn hex_val(c: u8) -> Result<u8, ParseIdError> {
    match c {
        b'0'..=b'9' => Ok(c - b'0'),
        b'a'..=b'f' => Ok(c - b'a' + 10),
        b'A'..=b'F' => Ok(c - b'A' + 10),
        _ => Err(ParseIdError),
    }
}

fn digest(domain: &str, parts: &[&[u8]]) -> [u8; ID_LEN] {
    let mut h = Sha256::new();
    h.update((domain.len() as u64).to_le_bytes());
    h.update(domain.as_bytes());
    for p in parts {
        h.update((p.len() as u64).to_le_bytes());
        h.update(p);
    }
    let full = h.finalize();
    let mut out = [0u8; ID_LEN];
    out.copy_from_slice(&full[..ID_LEN]);
    out
}

impl NodeId {
    pub fn entity(type_label: &str, identity: &str) -> Self {
        Self(digest("entity", &[type_label.as_bytes(), identity.as_bytes()]))
    }

    pub fn activity(workflow_execution_id: &str, task_id: &str) -> Self {
        Self(digest(
            "activity",
            &[workflow_execution_id.as_bytes(), task_id.as_bytes()],
        ))
    }
}

impl EdgeId {
    pub fn of(kind: EdgeKind, src: NodeId, dst: NodeId) -> Self {
        Self(digest(kind.as_str(), &[&src.0, &dst.0]))
    }
}

/// Stable surrogate identity for a data item that has no identifying value,
/// derived from its canonical attribute encoding.
pub(crate) fn surrogate_identity(type_label: &str, canonical_attributes: &str) -> String {
    let bytes = digest(
        "surrogate",
        &[type_label.as_bytes(), canonical_attributes.as_bytes()],
    );
    let mut s = String::with_capacity(2 + ID_LEN * 2);
    s.push_str("~h");
    for b in &bytes {
        use core::fmt::Write;
        let _ = write!(s, "{:02x}", b);
    }
    s
}
