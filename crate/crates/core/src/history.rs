//! Per-iteration records shared by all optimizers.

/// One optimizer iteration.
#[derive(Debug, Clone, Copy)]
pub struct IterRecord {
    pub objective: f64,
    pub volume: f64,
    pub step: f64,
    pub multiplier: f64,
    /// optimality or convergence residual (loop-specific)
    pub residual: f64,
}

#[derive(Debug, Clone, Default)]
pub struct OptHistory {
    pub records: Vec<IterRecord>,
    pub converged: bool,
    pub aborted: Option<String>,
}

impl OptHistory {
    pub fn objectives(&self) -> Vec<f64> {
        self.records.iter().map(|r| r.objective).collect()
    }

    pub fn push(&mut self, r: IterRecord) {
        self.records.push(r);
    }

    /// History CSV with the given header (e.g. `iter,J,volume,step,multiplier`).
    pub fn to_csv(&self, columns: &str) -> String {
        let mut s = String::from(columns);
        s.push('\n');
        for (i, r) in self.records.iter().enumerate() {
            let row: Vec<String> = columns
                .split(',')
                .map(|c| match c {
                    "iter" => i.to_string(),
                    "J" => format!("{}", r.objective),
                    "volume" => format!("{}", r.volume),
                    "step" => format!("{}", r.step),
                    "multiplier" => format!("{}", r.multiplier),
                    "criterion" | "residual" => format!("{}", r.residual),
                    other => panic!("unknown history column {other}"),
                })
                .collect();
            s.push_str(&row.join(","));
            s.push('\n');
        }
        s
    }
}
