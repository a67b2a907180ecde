"""D-FACTS deployment-set sizes for the bundled IEEE cases.

    python scripts/deployment_sizes.py
"""
from gridmtd.case_io import load_case
from gridmtd.mtd import deploy_dfacts
from gridmtd.network import Topology, is_forest


def main():
    print(f"{'case':8s} {'N':>4s} {'L':>4s} {'|L_D|':>6s}  tree")
    for name in ("ieee9", "ieee14", "ieee24", "ieee39"):
        case = load_case(name)
        topo = Topology.from_case(case)
        dep = deploy_dfacts(topo)
        rest = [l for l in topo.live_ids if l not in dep]
        print(f"{name:8s} {case.n_bus:4d} {case.n_branch:4d} {len(dep):6d}  {is_forest(topo, rest)}")


if __name__ == "__main__":
    main()
