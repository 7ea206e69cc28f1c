//! Plain-text SDPA sparse format for cross-checking with external solvers.
//!
//! The real standard form `min <C,X> + c^T x, <A_i,X> + e_i^T x = b_i` is the
//! SDPA dual `max <F0, Y>, <F_i, Y> = c_i` with `F0 = -C`, `F_i = A_i`,
//! `c_i = b_i`; the LP part is a diagonal block of negative size.

use std::fmt::Write as _;

use super::real::{RealSdp, SymTerm};

fn push_entries(out: &mut String, matno: usize, t: &SymTerm, n: usize, sign: f64) {
    let dense = t.to_dense(n);
    for i in 0..n {
        for j in i..n {
            let v = sign * dense[(i, j)];
            if v != 0.0 {
                let _ = writeln!(out, "{matno} 1 {} {} {v:.17e}", i + 1, j + 1);
            }
        }
    }
}

pub fn to_sdpa(p: &RealSdp) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "\"hris-isac sdp export: max <F0,Y> s.t. <Fi,Y> = ci\"");
    let _ = writeln!(out, "{}", p.rows.len());
    if p.p > 0 {
        let _ = writeln!(out, "2");
        let _ = writeln!(out, "{} -{}", p.n, p.p);
    } else {
        let _ = writeln!(out, "1");
        let _ = writeln!(out, "{}", p.n);
    }
    let cs: Vec<String> = p.rows.iter().map(|r| format!("{:.17e}", r.b)).collect();
    let _ = writeln!(out, "{}", cs.join(" "));
    if let Some(c) = &p.c_mat {
        push_entries(&mut out, 0, c, p.n, -1.0);
    }
    for (k, v) in p.c_lin.iter().enumerate() {
        if *v != 0.0 {
            let _ = writeln!(out, "0 2 {} {} {:.17e}", k + 1, k + 1, -v);
        }
    }
    for (i, row) in p.rows.iter().enumerate() {
        if let Some(a) = &row.a {
            push_entries(&mut out, i + 1, a, p.n, 1.0);
        }
        let mut lp = vec![0.0; p.p];
        for &(k, v) in &row.e {
            lp[k] += v;
        }
        for (k, v) in lp.iter().enumerate() {
            if *v != 0.0 {
                let _ = writeln!(out, "{} 2 {} {} {v:.17e}", i + 1, k + 1, k + 1);
            }
        }
    }
    out
}
