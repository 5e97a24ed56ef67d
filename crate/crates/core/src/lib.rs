pub mod align;
pub mod augment;
pub mod dataset;
pub mod harness;
pub mod metrics;
pub mod spectral;
pub mod synth;
pub mod tokenizer;
pub mod signal;
pub mod util;

#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../book/src/introduction.md")]
    mod introduction {}
    #[doc = include_str!("../../../book/src/datasets.md")]
    mod datasets {}
    #[doc = include_str!("../../../book/src/synthetic.md")]
    mod synthetic {}
    #[doc = include_str!("../../../book/src/spectral.md")]
    mod spectral {}
    #[doc = include_str!("../../../book/src/tokenizer.md")]
    mod tokenizer {}
    #[doc = include_str!("../../../book/src/augmentation.md")]
    mod augmentation {}
    #[doc = include_str!("../../../book/src/retrieval.md")]
    mod retrieval {}
    #[doc = include_str!("../../../book/src/experiments.md")]
    mod experiments {}
}
