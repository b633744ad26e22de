"""MACs and parameter counts of every preset at its usual resolution."""

from cgnet.network import PRESETS
from cgnet.profiler import count_macs

RESOLUTIONS = {"sidd": 256, "gaussian": 512, "gopro": 256, "desk": 256}

if __name__ == "__main__":
    print(f"{'preset':<10}{'input':>10}{'GMACs':>10}{'params (M)':>12}")
    for name, cfg in PRESETS.items():
        r = RESOLUTIONS[name]
        rep = count_macs(cfg, r, r)
        print(f"{name:<10}{f'{r}x{r}':>10}{rep.total_macs / 1e9:>10.3f}{rep.total_params / 1e6:>12.3f}")
