"""A silent primary, step by step.

Runs seven replicas where the first committee's primary never proposes, then
prints the view-change milestones from the trace and the final chains.

    python3 demos/view_change_walkthrough.py
"""

from __future__ import annotations

from proteus import adversary as adv
from proteus.sim import SimulationConfig, count_messages, run_simulation

MILESTONES = ("vc-start", "vc-q", "vc-ready", "vc-p", "vc-done")


def main() -> None:
    cfg = SimulationConfig(n=7, epochs=3, seed=b"walkthrough", trace=True)
    cfg.adversary = adv.silent_primary_scenario(cfg.n, cfg.committee_size(), cfg.seed)
    print(f"silent primary: replica {next(iter(cfg.adversary))}; "
          f"epoch timeout {cfg.epoch_timeout()} ticks")
    metrics, trace = run_simulation(cfg)
    seen = set()
    for rec in trace:
        kind = rec["event_kind"]
        if kind in MILESTONES and kind not in seen:
            seen.add(kind)
            print(f"  tick {rec['tick']:5d}  replica {rec['replica']}  first {kind}")
    for vc in metrics.view_change_records:
        print(f"view {vc['view']}: started {vc['start']}, all correct replicas done at {vc['done']}")
    print(f"view-change messages: {count_messages(metrics, 'view-change')}")
    print(f"committed {metrics.committed_blocks} blocks; tips:")
    for r, (seq, digest) in sorted(metrics.tips.items()):
        tag = " (byzantine)" if r in cfg.adversary else ""
        print(f"  replica {r}: seq {seq} {digest[:16]}{tag}")


if __name__ == "__main__":
    main()
