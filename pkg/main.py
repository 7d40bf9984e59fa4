import sys


def main() -> int:
    try:
        from calamp_app.cli import main as run
    except ModuleNotFoundError as exc:
        if exc.name in {"numpy", "scipy", "pandas"}:
            raise SystemExit(f"Missing dependency: {exc.name}. Run 'pip install -r requirements.txt'.") from exc
        raise

    return run()


if __name__ == "__main__":
    sys.exit(main())
