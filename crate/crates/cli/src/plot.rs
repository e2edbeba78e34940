//! Emission of the convergence table (CSV), per-method data files, and a
//! gnuplot script with a 2^{-l} guide line.

use std::fmt::Write as _;

use aduq::quadrature::Method;
use aduq::uq::ConvergenceRow;

pub const CSV_HEADER: &str = "level,method,N,M,err_mean_h1,err_mean_h1semi,err_var_w11,wall_time_s";

pub fn csv_line(row: &ConvergenceRow<f64>) -> String {
    format!(
        "{},{},{},{},{:.10e},{:.10e},{:.10e},{:.3}",
        row.level,
        row.method,
        row.n_samples,
        row.kl_modes,
        row.err_mean_h1,
        row.err_mean_h1_semi,
        row.err_var_w11,
        row.wall_time_s
    )
}

/// Columns: level, err_mean_h1, err_mean_h1semi, err_var_w11, N.
pub fn method_dat(rows: &[ConvergenceRow<f64>], method: Method) -> String {
    let mut s = String::from("# l mean_h1 mean_h1semi var_w11 n\n");
    for row in rows.iter().filter(|r| r.method == method) {
        let _ = writeln!(
            s,
            "{} {:.10e} {:.10e} {:.10e} {}",
            row.level, row.err_mean_h1, row.err_mean_h1_semi, row.err_var_w11, row.n_samples
        );
    }
    s
}

/// A gnuplot script rendering the mean-H1 and variance-W11 error curves on
/// a log-scale y axis, with the 2^{-l} guide anchored at the first plotted
/// method's first data point.
pub fn gnuplot_script(example_id: u32, rows: &[ConvergenceRow<f64>], methods: &[Method]) -> String {
    let anchor = |pick: fn(&ConvergenceRow<f64>) -> f64| -> f64 {
        methods
            .iter()
            .find_map(|&m| rows.iter().find(|r| r.method == m))
            .map(|r| pick(r) * 2f64.powi(r.level as i32))
            .unwrap_or(1.0)
    };
    let mean_anchor = anchor(|r| r.err_mean_h1);
    let var_anchor = anchor(|r| r.err_var_w11);

    let mut s = String::new();
    let _ = writeln!(s, "set terminal pngcairo size 900,640");
    let _ = writeln!(s, "set logscale y");
    let _ = writeln!(s, "set xlabel 'Level l'");
    let _ = writeln!(s, "set ylabel 'Estimated error'");
    let _ = writeln!(s, "set key top right");
    for (title, column, output, anchor) in [
        (
            "H1 error of the mean",
            2,
            format!("example{example_id}_mean.png"),
            mean_anchor,
        ),
        (
            "W11 error of the variance",
            4,
            format!("example{example_id}_var.png"),
            var_anchor,
        ),
    ] {
        let _ = writeln!(s, "set output '{output}'");
        let _ = writeln!(s, "set title 'Example {example_id}: {title}'");
        let mut parts: Vec<String> = methods
            .iter()
            .map(|m| {
                format!(
                    "'example{example_id}_{m}.dat' using 1:{column} with linespoints title '{}'",
                    m.label().to_uppercase()
                )
            })
            .collect();
        parts.push(format!(
            "{anchor:.6e} * 2**(-x) with lines dashtype 2 title '2^{{-l}}'"
        ));
        let _ = writeln!(s, "plot {}", parts.join(", \\\n     "));
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;

    fn row(level: u32, method: Method) -> ConvergenceRow<f64> {
        ConvergenceRow {
            level,
            method,
            n_samples: 10,
            kl_modes: 5,
            err_mean_h1: 0.5f64.powi(level as i32),
            err_mean_h1_semi: 0.4,
            err_var_w11: 0.01,
            wall_time_s: 1.5,
        }
    }

    #[test]
    fn csv_schema() {
        let line = csv_line(&row(2, Method::Qmc));
        assert!(line.starts_with("2,qmc,10,5,"));
        assert_eq!(line.split(',').count(), CSV_HEADER.split(',').count());
    }

    #[test]
    fn dat_filters_by_method() {
        let rows = vec![row(0, Method::Qmc), row(1, Method::Mc), row(1, Method::Qmc)];
        let dat = method_dat(&rows, Method::Qmc);
        assert_eq!(dat.lines().count(), 3);
        assert!(dat.lines().nth(2).unwrap().starts_with("1 "));
    }

    #[test]
    fn script_has_logscale_and_guide() {
        let rows = vec![row(0, Method::Qmc), row(1, Method::Qmc)];
        let script = gnuplot_script(1, &rows, &[Method::Qmc]);
        assert!(script.contains("set logscale y"));
        assert!(script.contains("2**(-x)"));
        assert!(script.contains("example1_qmc.dat"));
    }
}
