//! Reserved vocabulary entries. Every vocabulary starts with these, in order.

pub const PAD: usize = 0;
pub const UNK: usize = 1;
/// Role token prepended to context sentences only; also the target-side
/// begin-of-sequence symbol.
pub const BOS: usize = 2;
pub const EOS: usize = 3;
pub const COUNT: usize = 4;

pub const PAD_STR: &str = "<pad>";
pub const UNK_STR: &str = "<unk>";
pub const BOS_STR: &str = "<bos>";
pub const EOS_STR: &str = "<eos>";

pub const SYMBOLS: [&str; COUNT] = [PAD_STR, UNK_STR, BOS_STR, EOS_STR];

pub fn is_special(symbol: &str) -> bool {
    SYMBOLS.contains(&symbol)
}
