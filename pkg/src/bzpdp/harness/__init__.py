from .bench import BenchReport, bench, percentile
from .scenario import ScenarioResult, run_scenario
from .synth import gen_policy_text, gen_synthetic, write_synthetic

__all__ = ["BenchReport", "ScenarioResult", "bench", "gen_policy_text", "gen_synthetic",
           "percentile", "run_scenario", "write_synthetic"]
