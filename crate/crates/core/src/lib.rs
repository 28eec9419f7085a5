pub mod cli;
pub mod codec;
pub mod medium;
pub mod sim;
pub mod switch;
pub mod time;
pub mod timing;

#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../book/src/intro.md")]
    mod intro {}
    #[doc = include_str!("../../../book/src/frames.md")]
    mod frames {}
    #[doc = include_str!("../../../book/src/timing.md")]
    mod timing {}
    #[doc = include_str!("../../../book/src/switch.md")]
    mod switch {}
    #[doc = include_str!("../../../book/src/simulation.md")]
    mod simulation {}
    #[doc = include_str!("../../../book/src/cli.md")]
    mod cli {}
}
