//! Closed-form predictions the experiments are checked against.

use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum AnalyticError {
    #[error("{name} = {value} is outside its domain ({domain})")]
    Domain {
        name: &'static str,
        value: f64,
        domain: &'static str,
    },
}

fn check(
    ok: bool,
    name: &'static str,
    value: f64,
    domain: &'static str,
) -> Result<(), AnalyticError> {
    if ok {
        Ok(())
    } else {
        Err(AnalyticError::Domain {
            name,
            value,
            domain,
        })
    }
}

/// Mean cache size when each of the `g` predecessors sees a given claim with
/// probability `p_r` and every examinee gets `m` claims:
/// `1 + g (1 - (1 - p_r)^m)`.
pub fn dht_cache_size_general(g: usize, p_r: f64, m: f64) -> Result<f64, AnalyticError> {
    check(g >= 1, "g", g as f64, "g >= 1")?;
    check((0.0..=1.0).contains(&p_r), "p_r", p_r, "0 <= p_r <= 1")?;
    check(m >= 0.0 && m.is_finite(), "m", m, "m >= 0")?;
    Ok(1.0 + g as f64 * (1.0 - (1.0 - p_r).powf(m)))
}

/// Mean cache size `s` and mean witness count `w` per cloned identity for
/// exactly `m` claims per examinee:
/// `s = 1 + gm / (g + m)`, `w = 1 + 2gm^2 / ((g + m)(g + 2m))`.
pub fn dht_ideal(g: usize, m: usize) -> Result<(f64, f64), AnalyticError> {
    check(g >= 1, "g", g as f64, "g >= 1")?;
    check(m >= 1, "m", m as f64, "m >= 1")?;
    let (g, m) = (g as f64, m as f64);
    let s = 1.0 + g * m / (g + m);
    let w = 1.0 + 2.0 * g * m * m / ((g + m) * (g + 2.0 * m));
    Ok((s, w))
}

/// Mean claim messages sent per node: `p_c d c l log2(n)`.
pub fn dht_comm_cost(p_c: f64, d: f64, c: f64, l: f64, n: usize) -> Result<f64, AnalyticError> {
    for (name, v) in [("p_c", p_c), ("d", d), ("c", c), ("l", l)] {
        check(v > 0.0 && v.is_finite(), name, v, "positive")?;
    }
    check(n >= 2, "n", n as f64, "n >= 2")?;
    Ok(p_c * d * c * l * (n as f64).log2())
}

/// `h / n`.
pub fn rde_detection_probability(h: f64, n: usize) -> Result<f64, AnalyticError> {
    check(n >= 1, "n", n as f64, "n >= 1")?;
    check(h >= 0.0 && h <= n as f64, "h", h, "0 <= h <= n")?;
    Ok(h / n as f64)
}

/// `|measured - predicted| / |predicted|`, or `None` when the prediction is 0.
pub fn relative_error(measured: f64, predicted: f64) -> Option<f64> {
    (predicted != 0.0).then(|| (measured - predicted).abs() / predicted.abs())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn general_cache_examples() {
        assert_eq!(dht_cache_size_general(10, 0.0, 5.0).unwrap(), 1.0);
        assert_eq!(dht_cache_size_general(10, 1.0, 1.0).unwrap(), 11.0);
        let s = dht_cache_size_general(10, 0.1, 10.0).unwrap();
        // 0.9^10 = 0.3486784401
        assert!((s - 7.513215599).abs() < 1e-9);
        assert!(dht_cache_size_general(0, 0.5, 1.0).is_err());
        assert!(dht_cache_size_general(1, 1.5, 1.0).is_err());
        assert!(dht_cache_size_general(1, 0.5, -1.0).is_err());
    }

    #[test]
    fn ideal_examples() {
        let (s, w) = dht_ideal(10, 10).unwrap();
        assert!((s - 6.0).abs() < 1e-12);
        assert!((w - (1.0 + 2000.0 / 600.0)).abs() < 1e-12);
        let mut last = (0.0, 0.0);
        for m in [1, 10, 100, 1000] {
            let (s, w) = dht_ideal(10, m).unwrap();
            assert!(s > last.0 && w > last.1);
            assert!(s < 11.0 && w < 11.0);
            last = (s, w);
        }
        assert!(11.0 - last.0 < 0.2 && 11.0 - last.1 < 0.2);
    }

    #[test]
    fn cost_is_linear() {
        assert_eq!(dht_comm_cost(1.0, 1.0, 1.0, 1.0, 2).unwrap(), 1.0);
        let a = dht_comm_cost(0.3, 10.0, 0.5, 3.0, 1000).unwrap();
        let b = dht_comm_cost(0.3, 10.0, 0.5, 6.0, 1000).unwrap();
        assert!((b - 2.0 * a).abs() < 1e-12);
        assert!(dht_comm_cost(0.0, 1.0, 1.0, 1.0, 2).is_err());
    }

    #[test]
    fn rde_bounds() {
        assert_eq!(rde_detection_probability(0.0, 10).unwrap(), 0.0);
        assert_eq!(rde_detection_probability(10.0, 10).unwrap(), 1.0);
        assert!(rde_detection_probability(11.0, 10).is_err());
    }
}
