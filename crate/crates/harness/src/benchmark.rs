//! The builtin three-state benchmark.
//!
//! Action 0 is conservative: each row keeps most mass on the current state.
//! Action 1 is aggressive: rows are spread over two states and the reward is
//! far more variable, peaking in state 2. Every row has a zero entry, and
//! every row moves to `x + 1 (mod 3)` with positive probability, so the chain
//! is irreducible under every policy.

use berknash_core::models::mixture_family;
use berknash_core::{ConjectureSet, Mdp, TransitionKernel};

pub const NAME: &str = "benchmark3";
pub const DISCOUNT: f64 = 0.95;
pub const FAMILY_EPS: [f64; 4] = [0.05, 0.15, 0.30, 0.45];

/// `[state][action][next]`.
pub fn transitions() -> Vec<Vec<Vec<f64>>> {
    vec![
        vec![vec![0.9, 0.1, 0.0], vec![0.0, 0.5, 0.5]],
        vec![vec![0.0, 0.8, 0.2], vec![0.4, 0.0, 0.6]],
        vec![vec![0.3, 0.0, 0.7], vec![0.5, 0.5, 0.0]],
    ]
}

/// `[state][action]`.
pub fn rewards() -> Vec<Vec<f64>> {
    vec![vec![0.5, 0.0], vec![0.4, 0.2], vec![0.6, 1.5]]
}

pub fn instance(discount: f64) -> berknash_core::Result<Mdp> {
    let kernel = TransitionKernel::from_rows(&transitions())?;
    let reward = rewards().concat();
    Mdp::with_uniform_initial(kernel, reward, discount)
}

/// The benchmark at discount 0.95 with the four-member mixture family.
pub fn benchmark3() -> (Mdp, ConjectureSet) {
    let mdp = instance(DISCOUNT).expect("builtin instance is valid");
    let cs = mixture_family(&mdp, &FAMILY_EPS).expect("builtin family is valid");
    (mdp, cs)
}

/// TOML snippet reproducing the builtin as an inline instance.
pub fn dump() -> String {
    let fmt_row = |row: &[f64]| {
        let cells: Vec<String> = row.iter().map(|v| format!("{v:?}")).collect();
        format!("[{}]", cells.join(", "))
    };
    let mut out = String::new();
    out.push_str(&format!("# builtin instance \"{NAME}\"\n[instance]\n"));
    out.push_str(&format!("discount = {DISCOUNT:?}\n"));
    out.push_str("initial = [0.3333333333333333, 0.3333333333333333, 0.3333333333333333]\n");
    out.push_str("# transitions[state][action][next]\ntransitions = [\n");
    for state in transitions() {
        let actions: Vec<String> = state.iter().map(|r| fmt_row(r)).collect();
        out.push_str(&format!("    [{}],\n", actions.join(", ")));
    }
    out.push_str("]\n# rewards[state][action]\nrewards = [\n");
    for row in rewards() {
        out.push_str(&format!("    {},\n", fmt_row(&row)));
    }
    out.push_str("]\n\n[family]\nkind = \"mixture\"\n");
    out.push_str(&format!("eps = {}\n", fmt_row(&FAMILY_EPS)));
    out
}
