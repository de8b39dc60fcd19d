"""
BolumZ - Terminal Çıktısı
Rich kütüphanesiyle CLI özetleri: doğrulama raporu, sonuç tabloları ve hata mesajları.
Makine tarafından okunan çıktılar storage.emit_table ile dosyaya gider; burası yalnızca insan içindir.
"""

from rich.console import Console
from rich.panel import Panel
from rich.table import Table
from rich.text import Text

from mdp_core import Mdp, ValidationReport

console = Console()
err_console = Console(stderr=True)

# Terminalde gösterilecek en fazla satır
MAX_ROWS = 40


def _fmt(value) -> str:
    if isinstance(value, float):
        return f"{value:.10g}"
    return str(value)


def validation_panel(mdp: Mdp, report: ValidationReport) -> Panel:
    """validate komutunun özet paneli."""
    table = Table(box=None, show_header=False, padding=(0, 2))
    table.add_column("Alan", style="bold cyan")
    table.add_column("Değer", style="bold white")

    table.add_row("durum sayısı", str(mdp.n_states))
    table.add_row("terminal", str(int(mdp.terminal_mask.sum())))
    table.add_row("d", str(report.d))
    table.add_row("mu_threshold", _fmt(report.mu_threshold))
    table.add_row("r_terminal_max", _fmt(report.r_terminal_max))
    table.add_row("deterministik", "evet" if report.is_deterministic else "hayır")
    table.add_row("döngülü", "evet" if report.has_cycles else "hayır")
    table.add_row("ortak eylem kümesi", "evet" if report.uniform_actions else "hayır")

    if report.ok:
        subtitle = "[bold green]ihlal yok[/]"
    else:
        for v in report.violations:
            table.add_row("[bold red]ihlal[/]", f"[red]{v}[/]")
        subtitle = f"[bold red]{len(report.violations)} ihlal[/]"

    return Panel(table, title="[bold magenta]MDP Doğrulama[/]", subtitle=subtitle, style="cyan")


def records_table(title: str, records: list[dict], columns: list[str]) -> Table:
    """Sonuç kayıtlarının ilk MAX_ROWS satırı."""
    table = Table(title=title, expand=False, padding=(0, 1))
    for i, col in enumerate(columns):
        table.add_column(col, style="bold green" if i == 0 else "white", justify="left" if i == 0 else "right")

    if not records:
        table.add_row(*(["[italic grey50]kayıt yok[/]"] + [""] * (len(columns) - 1)))
    for row in records[:MAX_ROWS]:
        table.add_row(*(_fmt(row.get(col, "")) for col in columns))
    if len(records) > MAX_ROWS:
        table.caption = f"[dim]{len(records) - MAX_ROWS} satır daha (tam tablo --out ile)[/]"
    return table


def summary_panel(title: str, fields: dict) -> Panel:
    """Anahtar/değer özeti (yakınsama, artık, iterasyon vb.)."""
    text = Text()
    for i, (key, value) in enumerate(fields.items()):
        if i:
            text.append("\n")
        text.append(f"{key}: ", style="bold cyan")
        text.append(_fmt(value))
    return Panel(text, title=f"[bold magenta]{title}[/]", style="cyan", expand=False)


def show(*renderables) -> None:
    for r in renderables:
        console.print(r)


def show_error(message: str) -> None:
    """Hata mesajını olduğu gibi stderr'e basar."""
    err_console.print(Text(f"Hata: {message}", style="bold red"), soft_wrap=True)
