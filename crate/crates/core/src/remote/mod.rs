//! Driving an external model over the logit-server wire protocol.

mod client;
pub mod protocol;
mod stub;

pub use client::{RemoteEmbedding, RemoteModel, RemoteOptions};
pub use protocol::{Request, Response};
pub use stub::{StubServer, StubService};

#[cfg(test)]
mod tests {
    use std::sync::Arc;

    use super::*;
    use crate::error::Error;
    use crate::model::{build_toy_model, LogitModel, ModelSpec, ToyModelKind, Vocab};

    fn stub() -> StubServer {
        let model = build_toy_model(ModelSpec::new(4, 3, 0, 8).unwrap(), ToyModelKind::Peaked { p_top: 0.7, seed: 1 }).unwrap();
        let vocab = Vocab::new(["<eos>", "a", "b", "c"]).unwrap();
        StubServer::spawn("127.0.0.1:0", StubService::new(Arc::new(model), Some(vocab), "stub")).unwrap()
    }

    #[test]
    fn remote_steps_equal_local() {
        let server = stub();
        let local = build_toy_model(ModelSpec::new(4, 3, 0, 8).unwrap(), ToyModelKind::Peaked { p_top: 0.7, seed: 1 }).unwrap();
        let remote = RemoteModel::connect(&server.addr().to_string(), RemoteOptions::default()).unwrap();
        assert_eq!(remote.spec().vocab_size, 4);
        assert_eq!(remote.name(), "stub");
        let a = remote.step(&[1, 2], &[3], None).unwrap();
        let b = local.step(&[1, 2], &[3], None).unwrap();
        assert_eq!(a.logits, b.logits);
        assert_eq!(a.hidden, b.hidden);
        assert!(matches!(remote.step(&[9], &[], None), Err(Error::Input(_))));
    }

    #[test]
    fn tokenizer_round_trip() {
        let server = stub();
        let remote = RemoteModel::connect(&server.addr().to_string(), RemoteOptions::default()).unwrap();
        assert_eq!(remote.tokenize("").unwrap(), Vec::<u32>::new());
        let ids = remote.tokenize("a b").unwrap();
        assert_eq!(ids, vec![1, 2]);
        assert_eq!(remote.detokenize(&ids).unwrap(), "a b");
        assert!(matches!(remote.tokenize("zebra"), Err(Error::Remote { .. })));
        assert!(remote.detokenize(&[7]).is_err());
    }
}
