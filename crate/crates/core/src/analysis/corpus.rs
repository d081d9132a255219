use std::fs::File;
use std::io::BufReader;
use std::path::Path;

use super::{offset_boxplot, OffsetStats};
use crate::error::{usage, Error, Result};
use crate::tensor::{read_tensor, Tensor};

/// Pools every offset value of one layer's dumps and summarizes them.
///
/// All dumps must share their last (tap) dimension.
pub fn corpus_aggregate(dumps: &[Tensor<f64>]) -> Result<OffsetStats> {
    let first = dumps
        .first()
        .ok_or_else(|| usage("no offset dumps to aggregate"))?;
    let taps = first.shape().last().copied().unwrap_or(1);
    let mut pooled = Vec::new();
    for (i, d) in dumps.iter().enumerate() {
        let k = d.shape().last().copied().unwrap_or(1);
        if k != taps {
            return Err(Error::Format(format!(
                "dump {i} has {k} taps, expected {taps}"
            )));
        }
        pooled.extend_from_slice(d.data());
    }
    offset_boxplot(&pooled)
}

/// Reads `.dt` files in the given order, tagging format errors with the file name.
pub fn load_dumps<P: AsRef<Path>>(paths: &[P]) -> Result<Vec<Tensor<f64>>> {
    paths
        .iter()
        .map(|p| {
            let p = p.as_ref();
            let file = File::open(p).map_err(|e| {
                Error::Io(std::io::Error::new(
                    e.kind(),
                    format!("{}: {e}", p.display()),
                ))
            })?;
            read_tensor(BufReader::new(file)).map_err(|e| match e {
                Error::Format(m) => Error::Format(format!("{}: {m}", p.display())),
                other => other,
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_dump_equals_direct_boxplot() {
        let d = Tensor::from_fn(&[4, 1, 3], |i| (i as f64 - 5.0) * 0.5);
        assert_eq!(
            corpus_aggregate(std::slice::from_ref(&d)).unwrap(),
            offset_boxplot(d.data()).unwrap()
        );
    }

    #[test]
    fn union_of_disjoint_dumps() {
        let a = Tensor::new(vec![1, 1, 2], vec![1.0, 2.0]).unwrap();
        let b = Tensor::new(vec![1, 1, 2], vec![10.0, 20.0]).unwrap();
        let s = corpus_aggregate(&[a, b]).unwrap();
        assert_eq!(s, offset_boxplot(&[1.0, 2.0, 10.0, 20.0]).unwrap());
        assert_eq!(s.n, 4);
    }

    #[test]
    fn mismatched_taps_and_empty_list() {
        let a = Tensor::<f64>::zeros(&[2, 1, 3]);
        let b = Tensor::<f64>::zeros(&[2, 1, 5]);
        assert!(matches!(corpus_aggregate(&[a, b]), Err(Error::Format(_))));
        assert!(matches!(corpus_aggregate(&[]), Err(Error::Usage(_))));
    }
}
