from rich.console import Console

console = Console(legacy_windows=False, highlight=False)
console_err = Console(legacy_windows=False, highlight=False, stderr=True)

ERROR_STYLE = "bold red"
SUCCESS_STYLE = "bold green"
INFO_STYLE = "bold cyan"
