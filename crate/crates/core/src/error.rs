use crate::market::ExchangeId;

pub type Result<T, E = Error> = core::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("no exchanges configured")]
    NoExchanges,
    #[error("exchange id {0} appears more than once")]
    DuplicateExchangeId(ExchangeId),
    #[error("exchange ids must be contiguous from 0; id {0} is out of range")]
    NonContiguousExchangeId(ExchangeId),
    #[error("exchange {id}: {reason}")]
    InvalidExchange { id: ExchangeId, reason: &'static str },
    #[error("calendar needs at least one day")]
    NoDays,
    #[error("invalid model parameters: {0}")]
    InvalidParams(&'static str),
    #[error("invalid configuration: {0}")]
    InvalidConfig(&'static str),
    #[error("protocol violation: {0}")]
    Protocol(&'static str),
    #[error("relaxation did not terminate within {0} generations")]
    Runaway(usize),
    #[error("non-finite input at event {0}")]
    NonFiniteInput(usize),
    #[error("non-finite return at event {0}")]
    NonFiniteReturn(usize),
    #[error("expected {expected} values, found {found}")]
    LengthMismatch { expected: usize, found: usize },
    #[error("empty search space")]
    EmptySearchSpace,
    #[error("input is empty")]
    EmptyInput,
}
