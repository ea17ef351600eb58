//! Scratch calibration runner: 32-fruit campaign, LOFO evaluation,
//! headline numbers per seed.

use ripetrack::commands::{evaluate_in_memory, simulate_in_memory};
use ripetrack::config::ExperimentConfig;
use ripetrack::evaluation::ModelVariant;
use ripetrack::interrogation::ScanSelection;
use ripetrack::sim::trajectory::Threshold;

fn main() {
    for seed in [1u64, 2, 3] {
        let mut config = ExperimentConfig {
            seed,
            ..ExperimentConfig::default()
        };
        config.cohort.fruits = 32;
        config.scan.selection = ScanSelection::Loaded;
        let t0 = std::time::Instant::now();
        let (logs, truth) = simulate_in_memory(&config).unwrap();
        let t1 = std::time::Instant::now();
        let bundle = evaluate_in_memory(&config, &logs, &truth).unwrap();
        let t2 = std::time::Instant::now();
        println!(
            "seed {seed}: sim {:.1}s eval {:.1}s rows {}",
            (t1 - t0).as_secs_f64(),
            (t2 - t1).as_secs_f64(),
            logs.iter().map(|l| l.samples.len()).sum::<usize>()
        );
        println!(
            "  abstention {:.2}% ({} of {})",
            100.0 * bundle.outcome.accounting.abstention_rate(),
            bundle.outcome.accounting.abstained,
            bundle.outcome.accounting.total()
        );
        for variant in ModelVariant::ALL {
            let accs: Vec<String> = Threshold::ALL
                .iter()
                .map(|&th| {
                    bundle
                        .outcome
                        .overall_accuracy(variant, th)
                        .map_or_else(|| "n/a".into(), |a| format!("{:.1}", 100.0 * a))
                })
                .collect();
            println!("  {:>5}: acc(0.9/0.8/0.7) = {}", variant.label(), accs.join(" / "));
        }
        println!(
            "  switching: base {:.1}% tol(+/-1d) {:.1}% mass|D|<=1 {:?}",
            100.0 * bundle.switching.base_accuracy,
            100.0 * bundle.switching.tolerant_accuracy,
            bundle.switching.mass_within(1).map(|m| (m * 100.0).round())
        );
        println!(
            "  sh-band: base {:.1}% tol(5%) {:.1}%",
            100.0 * bundle.sh_distance.base_accuracy,
            100.0 * bundle.sh_distance.tolerant_accuracy
        );
        let skipped: Vec<_> = bundle
            .outcome
            .folds
            .iter()
            .filter(|f| f.skipped.is_some())
            .collect();
        println!("  skipped folds: {}", skipped.len());
    }
}
