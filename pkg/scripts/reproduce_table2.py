"""Print the group-size table with its Hoeffding bounds as CSV."""
import argparse
import sys

from assessment_voting.sizing_welfare import hoeffding_failure_bound, reproduce_table2


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--json", action="store_true", help="emit JSON instead of CSV")
    args = parser.parse_args()
    table = reproduce_table2()
    if args.json:
        sys.stdout.write(table.to_json() + "\n")
        return
    sys.stdout.write(table.to_csv())
    for cell in table.cells:
        bound = hoeffding_failure_bound(cell.n1_star, cell.gap, cell.d_star)
        print(f"# c={cell.c} gap={cell.gap} eps={cell.epsilon}: bound at N1*={bound:.6g}", file=sys.stderr)


if __name__ == "__main__":
    main()
