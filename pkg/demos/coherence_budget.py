"""
Does a two-symbol block fit inside the coherence time?
======================================================

The space-time common stream needs the channel to stay put over two
consecutive OFDM symbols. Tabulate that budget for common subcarrier
spacings and residual Doppler values.
"""

from strsma.channel import ntn_feasibility

print(ntn_feasibility(60e3, 0.07, 8.4e3).to_text())
print()

print(f"{'SCS [kHz]':>10} {'Doppler [kHz]':>14} {'block [us]':>11} {'T_c [us]':>9}  fits")
for scs in (15e3, 30e3, 60e3, 120e3):
    for doppler in (2e3, 8.4e3, 21e3, 40e3):
        r = ntn_feasibility(scs, 0.07, doppler).as_dict()
        print(f"{scs / 1e3:10.0f} {doppler / 1e3:14.1f} {r['st_block_us']:11.2f} "
              f"{r['coherence_time_us']:9.2f}  {'yes' if r['st_block_feasible'] else 'no'}")
