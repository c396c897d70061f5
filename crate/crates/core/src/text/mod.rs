//! Tokenization, vocabulary with fuzzy mapping, dialog-pair ingestion,
//! labeling and splits.

mod corpus;
mod tokenize;
mod vocab;

pub use corpus::{
    ingest_pairs, label_corpus, parse_pairs, read_raw_pairs, split_corpus, Corpus, DialogPair, Direction, SplitSpec,
};
pub use tokenize::{detokenize, normalize_and_tokenize};
pub use vocab::{map_token_to_vocab, Vocabulary, DEFAULT_VOCAB_SIZE, EOS, OOV, PAD, SOS, SPECIALS, VOCAB_SIMILARITY_THRESHOLD};
