//! Signed share links for clips.
//!
//! A link is `/shared/<clip id>.wav?sig=<hex>` where the signature is
//! HMAC-SHA256 of the clip id under the service secret. Links stay valid as
//! long as the secret does.

use dualtone_core::ClipId;
use hmac::{Hmac, Mac};
use sha2::Sha256;

type HmacSha256 = Hmac<Sha256>;

#[derive(Clone)]
pub struct ShareSigner {
    key: Vec<u8>,
}

impl ShareSigner {
    pub fn new(secret: impl AsRef<[u8]>) -> Self {
        Self {
            key: secret.as_ref().to_vec(),
        }
    }

    /// A signer with a random key; its links die with the process.
    pub fn ephemeral() -> Self {
        Self::new(rand::random::<[u8; 32]>())
    }

    fn mac(&self, clip: ClipId) -> HmacSha256 {
        let mut mac = HmacSha256::new_from_slice(&self.key).expect("HMAC accepts any key length");
        mac.update(clip.to_string().as_bytes());
        mac
    }

    pub fn sign(&self, clip: ClipId) -> String {
        hex::encode(self.mac(clip).finalize().into_bytes())
    }

    pub fn verify(&self, clip: ClipId, signature: &str) -> bool {
        match hex::decode(signature) {
            Ok(bytes) => self.mac(clip).verify_slice(&bytes).is_ok(),
            Err(_) => false,
        }
    }

    pub fn path(&self, clip: ClipId) -> String {
        format!("/shared/{clip}.wav?sig={}", self.sign(clip))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn signatures_verify_only_for_their_clip() {
        let signer = ShareSigner::new("secret");
        let a = ClipId::new();
        let b = ClipId::new();
        let sig = signer.sign(a);
        assert_eq!(sig.len(), 64);
        assert!(signer.verify(a, &sig));
        assert!(!signer.verify(b, &sig));
        assert!(!signer.verify(a, "zz"));
        assert!(!ShareSigner::new("other").verify(a, &sig));
    }
}
