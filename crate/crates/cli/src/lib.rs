//! File formats, experiment configuration, and the run harness behind the
//! `robnet` binary. Everything numeric that leaves this crate is written
//! with 17 significant digits so files round-trip to the exact same bits.

pub mod config;
pub mod dataset_io;
pub mod harness;
pub mod model_io;
pub mod query;
pub mod report;

/// Formats a finite `f64` with 17 significant digits, enough to recover the
/// exact same bits on parse. Panics on NaN or infinity: files must never
/// contain them, and every writer validates first.
pub fn fmt_f64(value: f64) -> String {
    assert!(value.is_finite(), "cannot serialize a non-finite float");
    format!("{value:.16e}")
}

/// JSON serialization with every float written by [`fmt_f64`].
pub fn to_json_17<T: serde::Serialize>(value: &T) -> String {
    struct SigFigs;
    impl serde_json::ser::Formatter for SigFigs {
        fn write_f64<W: ?Sized + std::io::Write>(
            &mut self,
            writer: &mut W,
            value: f64,
        ) -> std::io::Result<()> {
            write!(writer, "{}", fmt_f64(value))
        }
    }
    let mut out = Vec::new();
    let mut ser = serde_json::Serializer::with_formatter(&mut out, SigFigs);
    value.serialize(&mut ser).expect("in-memory JSON serialization cannot fail");
    String::from_utf8(out).expect("serde_json emits UTF-8")
}
