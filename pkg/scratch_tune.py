"""Scratch harness: 3-method comparison across seeds for fleet/agent tuning."""
import sys
import time

import numpy as np

from cyclegen.synthetic import make_markov_fleet, oracle_scheme
from cyclegen.statespace import build_sagstm
from cyclegen.piesmc import AgentConfig, train_and_generate, build_idle_model
from cyclegen.baselines import segment_microtrips, mtb_generate, mcb_generate, sagfd
from cyclegen.analysis import fleet_reference, kinematic_fragments, fragment_cost, FRAGMENT_FIELDS


def run(fleet_seed=1, t_target=600, n_cand=50, seeds=5, verbose=True, **agent_kw):
    scheme = oracle_scheme()
    trips = make_markov_fleet(n_trips=100, trip_len=1200, seed=fleet_seed, scheme=scheme)
    ref, _ = fleet_reference(trips)
    m = build_sagstm(trips, scheme)
    idle = build_idle_model(trips, scheme)
    refd = sagfd(trips, scheme)
    mts = segment_microtrips(trips)
    if verbose:
        print('fleet t_i=%.1f v=%.2f vei=%.2f ap=%.2f tc=%.1f tap=%.1f | idle d=%.1f g=%.1f nnz=%d  n_mts=%d'
              % (ref.t_i, ref.v_bar, ref.v_bar_ei, ref.a_bar_p, ref.t_c, ref.t_ap,
                 idle.mean_idle_duration, idle.mean_idle_gap, m.n_nonzero, len(mts)))
    Ep, Em, Ec, dTi_p, dTi_c, tp, tc_ = [], [], [], [], [], [], []
    for seed in range(seeds):
        cfg = AgentConfig(t_target=t_target, n_candidates=n_cand, seed=seed, **agent_kw)
        t0 = time.perf_counter(); best, rep = train_and_generate(m, trips, scheme, cfg); el_p = time.perf_counter() - t0
        f = kinematic_fragments(best.v, best.a)
        rng = np.random.default_rng(seed)
        mtb = mtb_generate(mts, ref, idle, t_target, rng)
        fm = kinematic_fragments(mtb.v, mtb.a)
        rng = np.random.default_rng(seed)
        t0 = time.perf_counter(); mcb = mcb_generate(m, idle, scheme, t_target, n_cand, rng, refd); el_c = time.perf_counter() - t0
        fc = kinematic_fragments(mcb.v, mcb.a)
        E_mcb = fragment_cost(fc, ref).e_total
        Ep.append(best.cost_e); Em.append(mtb.cost_e); Ec.append(E_mcb)
        dTi_p.append(f.t_i - ref.t_i); dTi_c.append(fc.t_i - ref.t_i)
        tp.append(el_p); tc_.append(el_c)
        if verbose:
            print('  seed %d: P E=%.3f ti%+.1f (%.2fs) | MTB E=%.3f | MCB E=%.3f ti%+.1f (%.2fs)'
                  % (seed, best.cost_e, dTi_p[-1], el_p, mtb.cost_e, E_mcb, dTi_c[-1], el_c))
    res = dict(medEp=float(np.median(Ep)), medEm=float(np.median(Em)), medEc=float(np.median(Ec)),
               maxdTi=float(np.max(np.abs(dTi_p))), worst_mcb_minus_p=float(min(np.abs(dTi_c)) - max(np.abs(dTi_p))),
               medtp=float(np.median(tp)), medtc=float(np.median(tc_)))
    print('medians: P %.3f | MTB %.3f | MCB %.3f || margin MTB/P=%.2f  max|dTi_P|=%.1f  runtime P %.2fs MCB %.2fs'
          % (res['medEp'], res['medEm'], res['medEc'], res['medEm'] / max(res['medEp'], 1e-9),
             res['maxdTi'], res['medtp'], res['medtc']))
    return res


if __name__ == '__main__':
    kw = {}
    for arg in sys.argv[1:]:
        k, v = arg.split('=')
        kw[k] = float(v) if '.' in v else int(v)
    run(**kw)
