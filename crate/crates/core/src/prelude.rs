#[allow(unused_imports)]
pub(crate) use alloc::{
    boxed::Box,
    format,
    string::{String, ToString},
    sync::Arc,
    vec,
    vec::Vec,
};
#[allow(unused_imports)]
pub(crate) use num_traits::Float;
