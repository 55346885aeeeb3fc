//! Deterministic serialization: fixed key order, fixed float formatting
//! (17 significant digits, lossless for 64-bit floats), plus parsers used
//! by the round-trip checks.

use crate::effective::{EffectiveCoefficients, KernelTable};
use crate::error::{Error, Result};
use crate::tensor::{Mat, Tensor4};
use crate::verify::CheckReport;
use std::fmt::Write as _;

/// 17-significant-digit scientific notation; parses back to the same bits.
pub fn fmt17(x: f64) -> String {
    format!("{x:.16e}")
}

fn json_mat(out: &mut String, indent: &str, m: &Mat<f64>, d: usize) {
    out.push('[');
    for i in 0..d {
        if i > 0 {
            out.push_str(", ");
        }
        out.push('[');
        for j in 0..d {
            if j > 0 {
                out.push_str(", ");
            }
            out.push_str(&fmt17(m.get(i, j)));
        }
        out.push(']');
    }
    let _ = indent;
    out.push(']');
}

/// effective.json emitter. Key order is fixed; a_eff is nested in index
/// order [i][j][k][l].
pub fn effective_json(coeffs: &EffectiveCoefficients<f64>, checks: &[CheckReport]) -> String {
    let d = coeffs.dim;
    let mut s = String::new();
    s.push_str("{\n");
    let _ = writeln!(s, "  \"dim\": {},", d);
    let _ = writeln!(s, "  \"cell_fingerprint\": \"{:016x}\",", coeffs.cell_fingerprint);
    let _ = writeln!(s, "  \"vol_frac_matrix\": {},", fmt17(coeffs.vol_frac_matrix));
    let _ = writeln!(
        s,
        "  \"vol_frac_inclusion\": {},",
        fmt17(coeffs.vol_frac_inclusion)
    );
    s.push_str("  \"a_eff\": [");
    for i in 0..d {
        if i > 0 {
            s.push_str(", ");
        }
        s.push('[');
        for j in 0..d {
            if j > 0 {
                s.push_str(", ");
            }
            s.push('[');
            for k in 0..d {
                if k > 0 {
                    s.push_str(", ");
                }
                s.push('[');
                for l in 0..d {
                    if l > 0 {
                        s.push_str(", ");
                    }
                    s.push_str(&fmt17(coeffs.a_eff.get(i, j, k, l)));
                }
                s.push(']');
            }
            s.push(']');
        }
        s.push(']');
    }
    s.push_str("],\n");
    s.push_str("  \"k_eff\": ");
    json_mat(&mut s, "  ", &coeffs.k_eff, d);
    s.push_str(",\n  \"b_coupling\": ");
    json_mat(&mut s, "  ", &coeffs.b_coupling, d);
    s.push_str(",\n  \"lambda_coupling\": ");
    json_mat(&mut s, "  ", &coeffs.lambda_coupling, d);
    let _ = writeln!(s, ",\n  \"c_tilde\": {},", fmt17(coeffs.c_tilde));
    let _ = writeln!(s, "  \"g_tilde\": {},", fmt17(coeffs.g_tilde));
    s.push_str("  \"f_bar\": [");
    for i in 0..d {
        if i > 0 {
            s.push_str(", ");
        }
        s.push_str(&fmt17(coeffs.f_bar[i]));
    }
    s.push_str("],\n");
    let kt = &coeffs.kernels;
    let _ = writeln!(s, "  \"kernels\": {{");
    let _ = writeln!(s, "    \"dt\": {},", fmt17(kt.dt));
    s.push_str("    \"eta\": [");
    for (n, v) in kt.eta.iter().enumerate() {
        if n > 0 {
            s.push_str(", ");
        }
        s.push_str(&fmt17(*v));
    }
    s.push_str("],\n    \"theta\": [");
    for (n, t) in kt.theta.iter().enumerate() {
        if n > 0 {
            s.push_str(", ");
        }
        s.push('[');
        for p in 0..d {
            if p > 0 {
                s.push_str(", ");
            }
            s.push_str(&fmt17(t[p]));
        }
        s.push(']');
    }
    s.push_str("],\n    \"m\": [");
    for (n, v) in kt.m.iter().enumerate() {
        if n > 0 {
            s.push_str(", ");
        }
        s.push_str(&fmt17(*v));
    }
    s.push_str("]\n  },\n");
    s.push_str("  \"checks\": ");
    s.push_str(&checks_json(checks, "  "));
    s.push_str("\n}\n");
    s
}

fn checks_json(checks: &[CheckReport], indent: &str) -> String {
    let mut s = String::from("[");
    for (i, c) in checks.iter().enumerate() {
        if i > 0 {
            s.push(',');
        }
        let _ = write!(
            s,
            "\n{indent}  {{\"name\": \"{}\", \"pass\": {}, \"measured\": {}, \"tolerance\": {}, \"provenance\": \"{}\"}}",
            c.name,
            c.pass,
            fmt17(c.measured),
            fmt17(c.tolerance),
            c.provenance
        );
    }
    if !checks.is_empty() {
        s.push('\n');
        s.push_str(indent);
    }
    s.push(']');
    s
}

/// report.json emitter for the verify command.
pub fn report_json(checks: &[CheckReport]) -> String {
    let pass = checks.iter().all(|c| c.pass);
    format!(
        "{{\n  \"pass\": {},\n  \"checks\": {}\n}}\n",
        pass,
        checks_json(checks, "  ")
    )
}

fn get<'a>(v: &'a serde_json::Value, key: &str) -> Result<&'a serde_json::Value> {
    v.get(key)
        .ok_or_else(|| Error::Mismatch(format!("effective.json missing key {key:?}")))
}

fn as_f64(v: &serde_json::Value) -> Result<f64> {
    v.as_f64()
        .ok_or_else(|| Error::Mismatch("expected a number".into()))
}

/// Parse effective.json back into the coefficient set (checks are not
/// reconstructed). Together with [`effective_json`] this is a lossless,
/// byte-stable round trip.
pub fn parse_effective_json(text: &str) -> Result<EffectiveCoefficients<f64>> {
    let v: serde_json::Value = serde_json::from_str(text)
        .map_err(|e| Error::Mismatch(format!("effective.json parse error: {e}")))?;
    let d = get(&v, "dim")?
        .as_u64()
        .ok_or_else(|| Error::Mismatch("dim must be an integer".into()))? as usize;
    let fp = u64::from_str_radix(
        get(&v, "cell_fingerprint")?
            .as_str()
            .ok_or_else(|| Error::Mismatch("cell_fingerprint must be a string".into()))?,
        16,
    )
    .map_err(|e| Error::Mismatch(format!("bad fingerprint: {e}")))?;

    let mut a_eff = Tensor4::zeros(d);
    let arr = get(&v, "a_eff")?;
    for i in 0..d {
        for j in 0..d {
            for k in 0..d {
                for l in 0..d {
                    a_eff.set(i, j, k, l, as_f64(&arr[i][j][k][l])?);
                }
            }
        }
    }
    let read_mat = |key: &str| -> Result<Mat<f64>> {
        let arr = get(&v, key)?;
        let mut m = Mat::zeros(d);
        for i in 0..d {
            for j in 0..d {
                m.set(i, j, as_f64(&arr[i][j])?);
            }
        }
        Ok(m)
    };
    let kt = get(&v, "kernels")?;
    let eta: Vec<f64> = get(kt, "eta")?
        .as_array()
        .ok_or_else(|| Error::Mismatch("kernels.eta must be an array".into()))?
        .iter()
        .map(as_f64)
        .collect::<Result<_>>()?;
    let m_k: Vec<f64> = get(kt, "m")?
        .as_array()
        .ok_or_else(|| Error::Mismatch("kernels.m must be an array".into()))?
        .iter()
        .map(as_f64)
        .collect::<Result<_>>()?;
    let mut theta = Vec::new();
    for row in get(kt, "theta")?
        .as_array()
        .ok_or_else(|| Error::Mismatch("kernels.theta must be an array".into()))?
    {
        let mut t = [0.0f64; 3];
        for (p, tp) in t.iter_mut().enumerate().take(d) {
            *tp = as_f64(&row[p])?;
        }
        theta.push(t);
    }
    let f_arr = get(&v, "f_bar")?;
    let mut f_bar = [0.0f64; 3];
    for (i, fi) in f_bar.iter_mut().enumerate().take(d) {
        *fi = as_f64(&f_arr[i])?;
    }

    Ok(EffectiveCoefficients {
        dim: d,
        a_eff,
        k_eff: read_mat("k_eff")?,
        b_coupling: read_mat("b_coupling")?,
        lambda_coupling: read_mat("lambda_coupling")?,
        c_tilde: as_f64(get(&v, "c_tilde")?)?,
        g_tilde: as_f64(get(&v, "g_tilde")?)?,
        f_bar,
        vol_frac_matrix: as_f64(get(&v, "vol_frac_matrix")?)?,
        vol_frac_inclusion: as_f64(get(&v, "vol_frac_inclusion")?)?,
        cell_fingerprint: fp,
        kernels: KernelTable {
            dt: as_f64(get(kt, "dt")?)?,
            eta,
            theta,
            m: m_k,
        },
    })
}

/// kernels.csv: one row per step including n = 0; increments and their
/// cumulative sums.
pub fn kernels_csv(table: &KernelTable<f64>, dim: usize) -> String {
    let mut s = String::from("t,eta");
    for p in 0..dim {
        let _ = write!(s, ",theta_{}", p + 1);
    }
    s.push_str(",m,cum_eta");
    for p in 0..dim {
        let _ = write!(s, ",cum_theta_{}", p + 1);
    }
    s.push_str(",cum_m\n");

    let mut cum_eta = 0.0;
    let mut cum_theta = [0.0f64; 3];
    let mut cum_m = 0.0;
    for n in 0..=table.len() {
        let (eta, theta, m) = if n == 0 {
            (0.0, [0.0f64; 3], 0.0)
        } else {
            (table.eta[n - 1], table.theta[n - 1], table.m[n - 1])
        };
        cum_eta += eta;
        cum_m += m;
        for p in 0..dim {
            cum_theta[p] += theta[p];
        }
        let t = table.dt * n as f64;
        let _ = write!(s, "{},{}", fmt17(t), fmt17(eta));
        for tp in theta.iter().take(dim) {
            let _ = write!(s, ",{}", fmt17(*tp));
        }
        let _ = write!(s, ",{},{}", fmt17(m), fmt17(cum_eta));
        for tp in cum_theta.iter().take(dim) {
            let _ = write!(s, ",{}", fmt17(*tp));
        }
        let _ = writeln!(s, ",{}", fmt17(cum_m));
    }
    s
}

/// Re-parse kernels.csv into (dt, eta, theta, m); bit-exact against the
/// in-memory table.
pub fn parse_kernels_csv(text: &str, dim: usize) -> Result<KernelTable<f64>> {
    let mut lines = text.lines();
    let _header = lines
        .next()
        .ok_or_else(|| Error::Mismatch("kernels.csv is empty".into()))?;
    let mut eta = Vec::new();
    let mut theta = Vec::new();
    let mut m = Vec::new();
    let mut times = Vec::new();
    for line in lines {
        if line.trim().is_empty() {
            continue;
        }
        let cols: Vec<f64> = line
            .split(',')
            .map(|c| {
                c.parse::<f64>()
                    .map_err(|e| Error::Mismatch(format!("bad csv number {c:?}: {e}")))
            })
            .collect::<Result<_>>()?;
        if cols.len() != 2 * dim + 5 {
            return Err(Error::Mismatch("kernels.csv has the wrong column count".into()));
        }
        times.push(cols[0]);
        eta.push(cols[1]);
        let mut t = [0.0f64; 3];
        t[..dim].copy_from_slice(&cols[2..2 + dim]);
        theta.push(t);
        m.push(cols[2 + dim]);
    }
    if times.is_empty() {
        return Err(Error::Mismatch("kernels.csv has no rows".into()));
    }
    // drop the n = 0 zero row
    let dt = if times.len() > 1 {
        times[1] - times[0]
    } else {
        0.0
    };
    eta.remove(0);
    theta.remove(0);
    m.remove(0);
    Ok(KernelTable { dt, eta, theta, m })
}

/// series.csv of per-step macro field norms.
pub fn series_csv(rows: &[(f64, f64, f64, f64, f64)]) -> String {
    let mut s = String::from("t,p1_l2,p1_max,u_l2,overall_l2\n");
    for (t, a, b, c, d) in rows {
        let _ = writeln!(
            s,
            "{},{},{},{},{}",
            fmt17(*t),
            fmt17(*a),
            fmt17(*b),
            fmt17(*c),
            fmt17(*d)
        );
    }
    s
}

/// Minimal SVG line plot of the eta and m kernels against time.
pub fn kernels_svg(table: &KernelTable<f64>) -> String {
    let w = 640.0;
    let h = 400.0;
    let ml = 60.0;
    let mb = 40.0;
    let mt = 20.0;
    let mr = 20.0;
    let n = table.len();
    let tmax = (table.dt * n as f64).max(table.dt);
    let vmax = table
        .eta
        .iter()
        .chain(table.m.iter())
        .fold(0.0f64, |a, &v| a.max(v.abs()))
        .max(1e-300);

    let x = |t: f64| ml + (w - ml - mr) * t / tmax;
    let y = |v: f64| h - mb - (h - mb - mt) * v / vmax;

    let polyline = |vals: &[f64], color: &str| {
        let mut pts = format!("{:.2},{:.2}", x(0.0), y(0.0));
        for (i, v) in vals.iter().enumerate() {
            let _ = write!(
                pts,
                " {:.2},{:.2}",
                x(table.dt * (i + 1) as f64),
                y(v.abs())
            );
        }
        format!(
            "  <polyline fill=\"none\" stroke=\"{color}\" stroke-width=\"1.5\" points=\"{pts}\"/>\n"
        )
    };

    let mut s = String::new();
    let _ = writeln!(
        s,
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{w}\" height=\"{h}\" viewBox=\"0 0 {w} {h}\">"
    );
    let _ = writeln!(
        s,
        "  <line x1=\"{ml}\" y1=\"{}\" x2=\"{}\" y2=\"{}\" stroke=\"black\"/>",
        h - mb,
        w - mr,
        h - mb
    );
    let _ = writeln!(
        s,
        "  <line x1=\"{ml}\" y1=\"{mt}\" x2=\"{ml}\" y2=\"{}\" stroke=\"black\"/>",
        h - mb
    );
    s.push_str(&polyline(&table.eta, "#1f77b4"));
    s.push_str(&polyline(&table.m, "#d62728"));
    let _ = writeln!(
        s,
        "  <text x=\"{}\" y=\"{}\" font-size=\"12\">t (max {})</text>",
        (w - mr) / 2.0,
        h - 10.0,
        fmt17(tmax)
    );
    let _ = writeln!(
        s,
        "  <text x=\"70\" y=\"32\" font-size=\"12\" fill=\"#1f77b4\">eta increments</text>"
    );
    let _ = writeln!(
        s,
        "  <text x=\"70\" y=\"48\" font-size=\"12\" fill=\"#d62728\">m increments</text>"
    );
    s.push_str("</svg>\n");
    s
}

/// Legacy ASCII VTK structured-points file with the macro point data.
pub fn vtk_structured_points(
    dims: [usize; 3],
    spacing: [f64; 3],
    p1: &[f64],
    u: &[f64],
    overall: &[f64],
    dim: usize,
) -> String {
    let n = dims[0] * dims[1] * dims[2];
    let mut s = String::new();
    s.push_str("# vtk DataFile Version 3.0\n");
    s.push_str("macro fields\n");
    s.push_str("ASCII\n");
    s.push_str("DATASET STRUCTURED_POINTS\n");
    let _ = writeln!(s, "DIMENSIONS {} {} {}", dims[0], dims[1], dims[2]);
    s.push_str("ORIGIN 0 0 0\n");
    let _ = writeln!(
        s,
        "SPACING {} {} {}",
        fmt17(spacing[0]),
        fmt17(spacing[1]),
        fmt17(if dim == 3 { spacing[2] } else { 1.0 })
    );
    let _ = writeln!(s, "POINT_DATA {n}");
    s.push_str("SCALARS p1 double\nLOOKUP_TABLE default\n");
    for v in p1 {
        let _ = writeln!(s, "{}", fmt17(*v));
    }
    s.push_str("VECTORS u double\n");
    for node in 0..n {
        let mut comps = [0.0f64; 3];
        for c in 0..dim {
            comps[c] = u[node * dim + c];
        }
        let _ = writeln!(s, "{} {} {}", fmt17(comps[0]), fmt17(comps[1]), fmt17(comps[2]));
    }
    s.push_str("SCALARS overall_pressure double\nLOOKUP_TABLE default\n");
    for v in overall {
        let _ = writeln!(s, "{}", fmt17(*v));
    }
    s
}
