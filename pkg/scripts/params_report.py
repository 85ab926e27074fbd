"""Print the parameter complexity tables (markdown) and the ledger check."""

from srepcc import report


def main():
    print("## Simplified coding model\n")
    print(report.to_markdown([("sub-network", "parameters")] + report.subnet_table(report.simplified_config())))
    print("## Original coding model\n")
    print(report.to_markdown([("sub-network", "parameters")] + report.subnet_table(report.original_config())))
    print("## Family totals\n")
    print(report.to_markdown(report.complexity_table()))
    print("## Channel simplification approaches\n")
    print(report.to_markdown(report.simplification_table()))
    bad = [(k, e, g) for k, e, g in report.check_ledger() if e != g]
    print("ledger: OK" if not bad else f"ledger: {len(bad)} mismatches {bad}")


if __name__ == "__main__":
    main()
