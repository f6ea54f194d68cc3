use gazekit::formats::read_jsonl_path;
use gazekit::selection::{decoupling_report, from_trainer_state, select_checkpoint, EvalSnapshot};
use proptest::prelude::*;

const TRACE: &str = concat!(env!("CARGO_MANIFEST_DIR"), "/tests/fixtures/eval_trace.jsonl");
const STATE: &str = concat!(env!("CARGO_MANIFEST_DIR"), "/tests/fixtures/trainer_state.json");

fn trace() -> Vec<EvalSnapshot> {
    read_jsonl_path(TRACE).unwrap().into_iter().map(|(_, s)| s).collect()
}

#[test]
fn reference_trace_selection() {
    let run = trace();
    assert_eq!(run.len(), 151);
    assert_eq!((run[0].step, run[150].step), (50, 7550));
    let best = select_checkpoint(&run).unwrap();
    assert_eq!((best.step, best.eval_ba), (1650, 0.9990));
    assert_eq!(best.unique_output_ratio, Some(0.9308));
    assert_eq!(best.top1_template_ratio, Some(0.5258));
    assert_eq!(best.avg_gen_len, Some(89.15));
    let r = decoupling_report(&run).unwrap();
    assert_eq!((r.loss_min_step, r.loss_min, r.step_gap), (2850, 0.2252, 1200));
}

#[test]
fn trainer_state_export_matches_trace() {
    let state: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(STATE).unwrap()).unwrap();
    let converted = from_trainer_state(&state).unwrap();
    assert_eq!(converted, trace());
}

fn run_strategy() -> impl Strategy<Value = Vec<EvalSnapshot>> {
    prop::collection::vec((1u64..100, 0.0f64..3.0, 0u32..1000), 1..60).prop_map(|v| {
        let mut step = 0;
        v.into_iter()
            .map(|(gap, loss, ba)| {
                step += gap;
                EvalSnapshot::new(step, loss, ba as f64 / 1000.0)
            })
            .collect()
    })
}

proptest! {
    #[test]
    fn matches_exhaustive_scan(run in run_strategy()) {
        let r = decoupling_report(&run).unwrap();
        let max_ba = run.iter().map(|s| s.eval_ba).fold(f64::MIN, f64::max);
        let min_loss = run.iter().map(|s| s.eval_loss).fold(f64::MAX, f64::min);
        let first_max = run.iter().find(|s| s.eval_ba == max_ba).unwrap().step;
        let first_min = run.iter().find(|s| s.eval_loss == min_loss).unwrap().step;
        prop_assert_eq!(r.ba_best_step, first_max);
        prop_assert_eq!(r.loss_min_step, first_min);
        prop_assert_eq!(r.step_gap, first_max.abs_diff(first_min));
    }

    #[test]
    fn argmax_survives_monotone_maps(run in run_strategy()) {
        let step = select_checkpoint(&run).unwrap().step;
        for f in [|x: f64| x * x, |x: f64| x.sqrt(), |x: f64| 0.1 + 0.5 * x] {
            let mapped: Vec<_> = run.iter().map(|s| EvalSnapshot { eval_ba: f(s.eval_ba), ..s.clone() }).collect();
            prop_assert_eq!(select_checkpoint(&mapped).unwrap().step, step);
        }
    }

    #[test]
    fn appending_a_worse_snapshot_changes_nothing(run in run_strategy(), worse in 0.0f64..1.0) {
        let best = select_checkpoint(&run).unwrap().clone();
        let mut longer = run.clone();
        let last = longer.last().unwrap().step;
        longer.push(EvalSnapshot::new(last + 50, 0.1, best.eval_ba * worse));
        prop_assert_eq!(select_checkpoint(&longer).unwrap().step, best.step);
    }
}
