//! Tabulated-kernel CSV loader.
//!
//! Format: `#`-prefixed metadata lines followed by two-column `r,nu` rows.
//! Required metadata: `head-exponent` in (-2, -1] and `tail-exponent` < -1,
//! the analytic power laws continuing the table below and above the grid.
//!
//! ```text
//! # head-exponent = -1.5
//! # tail-exponent = -1.5
//! 0.001,8921.3
//! 0.002,3154.2
//! ...
//! ```

use cee_core::subordinator::{LevyKernel, OccupationCfg};

pub fn load_tabulated(path: &str, occupation: &OccupationCfg) -> Result<LevyKernel, String> {
    let text = std::fs::read_to_string(path).map_err(|e| format!("{path}: {e}"))?;
    parse_tabulated(&text, occupation).map_err(|e| format!("{path}: {e}"))
}

pub fn parse_tabulated(text: &str, occupation: &OccupationCfg) -> Result<LevyKernel, String> {
    let mut head_exp = None;
    let mut tail_exp = None;
    let mut points = Vec::new();
    for (lineno, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() {
            continue;
        }
        if let Some(meta) = line.strip_prefix('#') {
            if let Some((key, value)) = meta.split_once('=') {
                let value = value.trim();
                match key.trim() {
                    "head-exponent" => {
                        head_exp =
                            Some(value.parse::<f64>().map_err(|e| {
                                format!("line {}: head-exponent: {e}", lineno + 1)
                            })?)
                    }
                    "tail-exponent" => {
                        tail_exp =
                            Some(value.parse::<f64>().map_err(|e| {
                                format!("line {}: tail-exponent: {e}", lineno + 1)
                            })?)
                    }
                    _ => {} // free-form comments are allowed
                }
            }
            continue;
        }
        let (r, nu) = line
            .split_once(',')
            .ok_or_else(|| format!("line {}: expected `r,nu`", lineno + 1))?;
        let r: f64 = r
            .trim()
            .parse()
            .map_err(|e| format!("line {}: r: {e}", lineno + 1))?;
        let nu: f64 = nu
            .trim()
            .parse()
            .map_err(|e| format!("line {}: nu: {e}", lineno + 1))?;
        points.push((r, nu));
    }
    let head = head_exp.ok_or("missing `# head-exponent = ...` metadata")?;
    let tail = tail_exp.ok_or("missing `# tail-exponent = ...` metadata")?;
    LevyKernel::tabulated(&points, head, tail, occupation).map_err(|e| e.to_string())
}

/// Render a stable kernel as CSV text (handy for generating test tables).
pub fn stable_table_csv(alpha: f64, r_lo: f64, r_hi: f64, points: usize) -> String {
    let norm = 1.0 / libm::tgamma(-alpha).abs();
    let mut out = String::new();
    out.push_str(&format!("# head-exponent = {}\n", -1.0 - alpha));
    out.push_str(&format!("# tail-exponent = {}\n", -1.0 - alpha));
    for i in 0..points {
        let r = r_lo * libm::exp(libm::log(r_hi / r_lo) * i as f64 / (points - 1) as f64);
        let nu = norm * libm::pow(r, -1.0 - alpha);
        out.push_str(&format!("{r},{nu}\n"));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small_occupation() -> OccupationCfg {
        OccupationCfg {
            s_max: 4.0,
            n_paths: 500,
            step: 2e-3,
            ..OccupationCfg::default()
        }
    }

    #[test]
    fn parses_a_stable_table() {
        let csv = stable_table_csv(0.5, 1e-3, 1e3, 60);
        let kernel = parse_tabulated(&csv, &small_occupation()).unwrap();
        let psi = kernel.laplace_exponent(2.0).unwrap();
        assert!((psi - libm::sqrt(2.0)).abs() < 2e-3 * libm::sqrt(2.0), "psi {psi}");
    }

    #[test]
    fn rejects_bad_metadata_and_rows() {
        let occ = small_occupation();
        assert!(parse_tabulated("0.1,1.0\n0.2,0.5\n", &occ).is_err());
        let bad_head = "# head-exponent = -2.5\n# tail-exponent = -2.0\n0.1,1.0\n0.2,0.5\n";
        assert!(parse_tabulated(bad_head, &occ).is_err());
        let bad_tail = "# head-exponent = -1.5\n# tail-exponent = -0.5\n0.1,1.0\n0.2,0.5\n";
        assert!(parse_tabulated(bad_tail, &occ).is_err());
        let bad_row = "# head-exponent = -1.5\n# tail-exponent = -1.5\n0.1;1.0\n";
        assert!(parse_tabulated(bad_row, &occ).is_err());
        let unsorted = "# head-exponent = -1.5\n# tail-exponent = -1.5\n0.2,1.0\n0.1,2.0\n";
        assert!(parse_tabulated(unsorted, &occ).is_err());
    }
}
