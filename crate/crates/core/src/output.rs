//! Text renderings of results. Every number goes through [`fmt_num`], so
//! identical inputs give byte-identical files.

use csv::Writer;
use sha2::{Digest, Sha256};

use crate::game::GameConfig;
use crate::markov::StationaryResult;
use crate::mmzd::PinningResult;
use crate::sim::{GridCell, Trajectory};
use crate::state::StateSpace;
use crate::strategy::{Strategy, StrategyKind};

/// Shortest text that round-trips the value rounded to 12 significant
/// digits; scientific notation below 1e-5 and from 1e16 up. Negative zero
/// prints as `0`.
pub fn fmt_num(x: f64) -> String {
    if x.is_nan() {
        return "NaN".into();
    }
    if x.is_infinite() {
        return if x > 0.0 { "inf".into() } else { "-inf".into() };
    }
    let rounded: f64 = format!("{x:.11e}").parse().expect("float text");
    if rounded == 0.0 {
        return "0".into();
    }
    let text = format!("{rounded:?}");
    match text.strip_suffix(".0") {
        Some(t) => t.to_string(),
        None => text,
    }
}

/// First 16 hex digits of the SHA-256 of the game's canonical JSON.
pub fn cfg_hash(cfg: &GameConfig) -> String {
    let json = serde_json::to_vec(cfg).expect("config serializes");
    hex::encode(Sha256::digest(&json))[..16].to_string()
}

fn finish(w: Writer<Vec<u8>>) -> String {
    String::from_utf8(w.into_inner().expect("in-memory writer")).expect("utf-8 csv")
}

fn writer() -> Writer<Vec<u8>> {
    csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(Vec::new())
}

/// `rep,round,org_1..org_N,action_1..action_N,utility_1..utility_N,welfare`;
/// `org_i` holds the strategy kind. Replications and rounds are 1-based.
pub fn trajectory_csv(traj: &Trajectory) -> String {
    let n = traj.n_orgs;
    let mut w = writer();
    let mut header = vec!["rep".to_string(), "round".to_string()];
    header.extend((1..=n).map(|i| format!("org_{i}")));
    header.extend((1..=n).map(|i| format!("action_{i}")));
    header.extend((1..=n).map(|i| format!("utility_{i}")));
    header.push("welfare".into());
    w.write_record(&header).expect("csv write");
    for rec in &traj.records {
        let mut row = vec![(rec.rep + 1).to_string(), rec.round.to_string()];
        row.extend(traj.labels[rec.rep as usize].iter().cloned());
        row.extend(rec.actions.actions().iter().map(u32::to_string));
        row.extend(rec.utilities.iter().map(|&u| fmt_num(u)));
        row.push(fmt_num(rec.welfare));
        w.write_record(&row).expect("csv write");
    }
    finish(w)
}

/// `round,mean_welfare,std_welfare,running_mean` across replications.
pub fn trajectory_summary_csv(traj: &Trajectory) -> String {
    let mut w = writer();
    w.write_record(["round", "mean_welfare", "std_welfare", "running_mean"])
        .expect("csv write");
    for t in 0..traj.rounds as usize {
        w.write_record([
            (t + 1).to_string(),
            fmt_num(traj.mean_welfare[t]),
            fmt_num(traj.std_welfare[t]),
            fmt_num(traj.running_mean[t]),
        ])
        .expect("csv write");
    }
    finish(w)
}

/// `controller,opponent,mean_welfare,std_welfare,pinned_target`; the target
/// is empty for non-pinning controllers.
pub fn grid_csv<'a>(cells: impl IntoIterator<Item = &'a GridCell>) -> String {
    let mut w = writer();
    w.write_record([
        "controller",
        "opponent",
        "mean_welfare",
        "std_welfare",
        "pinned_target",
    ])
    .expect("csv write");
    for c in cells {
        w.write_record([
            c.controller.name().to_string(),
            c.opponent.name().to_string(),
            fmt_num(c.mean_welfare),
            fmt_num(c.std_welfare),
            c.pinned_target.map(fmt_num).unwrap_or_default(),
        ])
        .expect("csv write");
    }
    finish(w)
}

/// One CSV per controller kind, in first-appearance order.
pub fn grid_panels(cells: &[GridCell]) -> Vec<(StrategyKind, String)> {
    let mut order: Vec<StrategyKind> = Vec::new();
    for c in cells {
        if !order.contains(&c.controller) {
            order.push(c.controller);
        }
    }
    order
        .into_iter()
        .map(|k| (k, grid_csv(cells.iter().filter(|c| c.controller == k))))
        .collect()
}

/// `state_index,actions,probability` for stationary distribution `which`,
/// preceded by a comment line with the multiplicity.
pub fn stationary_csv(space: &StateSpace, res: &StationaryResult, which: usize) -> String {
    let mut out = format!(
        "# distribution {} of {}, method {:?}{}\n",
        which + 1,
        res.multiplicity,
        res.method,
        if res.flagged { ", rank ambiguous" } else { "" }
    );
    let mut w = writer();
    w.write_record(["state_index", "actions", "probability"])
        .expect("csv write");
    for (j, &p) in space.indices().zip(&res.distributions[which]) {
        w.write_record([j.to_string(), space.decode(j).to_string(), fmt_num(p)])
            .expect("csv write");
    }
    out.push_str(&finish(w));
    out
}

/// Header of `#` lines with the config hash and pinning parameters, then
/// either `state_index,actions,p_slice` rows or `key,value` rule parameters.
pub fn strategy_file(cfg: &GameConfig, res: &PinningResult) -> String {
    let spec = &res.spec;
    let mut out = String::new();
    out.push_str("# silo-games pinning strategy\n");
    out.push_str(&format!("# cfg_hash={}\n", cfg_hash(cfg)));
    out.push_str(&format!("# controller={}\n", spec.controller + 1));
    out.push_str(&format!("# phi={}\n", fmt_num(spec.phi)));
    out.push_str(&format!("# slice={}\n", spec.slice));
    out.push_str(&format!("# alpha0={}\n", fmt_num(res.alpha0)));
    out.push_str(&format!(
        "# pinned_welfare={}\n",
        fmt_num(res.pinned_welfare)
    ));
    out.push_str(&format!(
        "# alpha0_bounds=[{}, {}]\n",
        fmt_num(res.bounds.alpha0_min),
        fmt_num(res.bounds.alpha0_max)
    ));
    out.push_str(&format!(
        "# completion={}\n",
        serde_json::to_string(&spec.completion).expect("completion serializes")
    ));
    let mut w = writer();
    match (&res.strategy, res.slice_probabilities()) {
        (Strategy::Table(t), Some(p)) => {
            w.write_record(["state_index", "actions", "p_slice"])
                .expect("csv write");
            for (j, pj) in t.space().indices().zip(p) {
                w.write_record([j.to_string(), t.space().decode(j).to_string(), fmt_num(pj)])
                    .expect("csv write");
            }
        }
        _ => {
            let weights = spec
                .weight_vector(cfg.n_orgs)
                .iter()
                .map(|&x| fmt_num(x))
                .collect::<Vec<_>>()
                .join(" ");
            w.write_record(["key", "value"]).expect("csv write");
            for (k, v) in [
                (
                    "rule",
                    "p_slice = phi * (S(prior) + alpha0) + [prior controller action == slice]"
                        .to_string(),
                ),
                ("phi", fmt_num(spec.phi)),
                ("alpha0", fmt_num(res.alpha0)),
                ("slice", spec.slice.to_string()),
                ("weights", weights),
            ] {
                w.write_record([k, v.as_str()]).expect("csv write");
            }
        }
    }
    out.push_str(&finish(w));
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::game::OrgParams;
    use crate::markov::{build_transition_matrix, stationary_distribution};
    use crate::mmzd::{synthesize, PinningSpec};
    use crate::sim::{run, InitialState, Seat, SimPlan};
    use crate::strategy::Baseline;

    fn c2() -> GameConfig {
        GameConfig::homogeneous(2, 1, 1, 10.0, 10.0, OrgParams::new(3.0, 0.4, 0.1))
    }

    #[test]
    fn numbers() {
        assert_eq!(fmt_num(-0.0), "0");
        assert_eq!(fmt_num(0.1 + 0.2), "0.3");
        assert_eq!(fmt_num(-3.0 / 55.0), "-0.0545454545455");
        assert_eq!(fmt_num(1e-20), "1e-20");
        assert_eq!(fmt_num(-2.775557561562891e-16), "-2.77555756156e-16");
        assert_eq!(fmt_num(0.001), "0.001");
        assert_eq!(fmt_num(1e20), "1e20");
        assert_eq!(fmt_num(2.0), "2");
        assert_eq!(fmt_num(123456789012345.0), "123456789012000");
        assert_eq!(fmt_num(1e-13 - 1e-13), "0");
    }

    #[test]
    fn hash_is_stable_and_sensitive() {
        let a = cfg_hash(&c2());
        assert_eq!(a.len(), 16);
        assert_eq!(a, cfg_hash(&c2()));
        let mut other = c2();
        other.orgs[1].comm_cost = 0.2;
        assert_ne!(a, cfg_hash(&other));
    }

    #[test]
    fn trajectory_layout() {
        let plan = SimPlan {
            cfg: c2(),
            seats: vec![Seat::Fixed(Strategy::Baseline(Baseline::AllC)), Seat::Mixed],
            rounds: 3,
            reps: 2,
            seed: 1,
            initial_state: InitialState::Full,
        };
        let text = trajectory_csv(&run(&plan).unwrap());
        let lines: Vec<_> = text.lines().collect();
        assert_eq!(
            lines[0],
            "rep,round,org_1,org_2,action_1,action_2,utility_1,utility_2,welfare"
        );
        assert_eq!(lines.len(), 7);
        assert!(lines[1].starts_with("1,1,allc,mixed:"));
        assert!(lines[6].starts_with("2,3,"));
        assert_eq!(
            trajectory_summary_csv(&run(&plan).unwrap()).lines().count(),
            4
        );
    }

    #[test]
    fn strategy_and_stationary_files() {
        let cfg = c2();
        let res = synthesize(&cfg, &PinningSpec::new(0.5, 0), 3.0 / 55.0).unwrap();
        let text = strategy_file(&cfg, &res);
        assert!(text.contains("# alpha0=0.0545454545455\n"));
        assert!(text.contains("state_index,actions,p_slice\n0,0 0,0.927272727273\n"));
        assert!(text.ends_with("3,1 1,0.0272727272727\n"));

        let tm = build_transition_matrix(
            &[res.strategy.clone(), Strategy::Baseline(Baseline::AllD)],
            &cfg,
            4096,
        )
        .unwrap();
        let st = stationary_distribution(&tm).unwrap();
        let csv = stationary_csv(tm.space(), &st, 0);
        assert!(csv.starts_with("# distribution 1 of 1"));
        assert!(csv.contains("2,1 0,1\n"));
    }
}
