"""
Trace viewer for recorded cohort_avn runs with rich formatting.

Loads a JSON-lines trace written by ``TraceRecorder.save`` (or
``cohort-avn run --trace``) and renders run overviews, per-vehicle timelines,
the N2N traffic of one vehicle and the security events of the whole run.
"""

from collections import Counter, defaultdict
from pathlib import Path

from rich.console import Console
from rich.panel import Panel
from rich.prompt import Prompt
from rich.table import Table

from cohort_avn.recording.trace_recorder import TraceEvent, load_trace, trace_hash
from cohort_avn.sim.events import GLOBAL_SUBJECT, EventCode

SECURITY_CODES = frozenset(
    {
        EventCode.MAC_VIOLATION,
        EventCode.TPD_VIOLATION,
        EventCode.STOP,
        EventCode.HALT,
        EventCode.EXCL_REPORT,
        EventCode.ATTACK,
        EventCode.V2X_BLOCKED,
    }
)
N2N_CODES = frozenset({EventCode.N2N_TX, EventCode.N2N_ACCEPT, EventCode.N2N_FLAG})

_BORDERS = {
    EventCode.MAC_VIOLATION: "red",
    EventCode.TPD_VIOLATION: "red",
    EventCode.STOP: "red",
    EventCode.ATTACK: "magenta",
    EventCode.N2N_FLAG: "yellow",
    EventCode.JOIN_OK: "green",
    EventCode.JOIN_REJ: "yellow",
}


def _ms(time_us: int) -> str:
    return f"{time_us / 1000:.3f} ms"


class TraceViewer:
    """Simple viewer for exploring a recorded run, vehicle by vehicle.

    Subjects are vehicle ids, except cohort-level events (RENUM, SPLIT,
    VELOCITY) whose subject is the cohort id and run-level events whose
    subject is -1.
    """

    def __init__(self, trace_path: str | Path):
        self.trace_path = Path(trace_path)
        self.events = load_trace(self.trace_path)
        self.subject_events = self._organize_events_by_subject()
        self.console = Console()

    def _organize_events_by_subject(self) -> dict[int, list[TraceEvent]]:
        subject_events = defaultdict(list)
        for event in self.events:
            subject_events[event.subject].append(event)
        for events in subject_events.values():
            events.sort(key=lambda e: e.time_us)
        return dict(subject_events)

    def _format_event(self, event: TraceEvent) -> str:
        detail = event.detail
        code = event.code
        try:
            if code is EventCode.N2N_TX:
                return (
                    f"{detail['channel']} {detail['hop']} from {detail['sender']} "
                    f"(origin {detail['origin']}, frame {detail['origin_frame']}): "
                    f"{detail['payload']}"
                )
            if code is EventCode.N2N_ACCEPT:
                return f"accepted {detail['key']} digest {detail['payload_digest']}"
            if code is EventCode.N2N_FLAG:
                return f"{detail['kind']} on {detail['key']}, suspects {detail['suspects']}"
            if code is EventCode.MAC_VIOLATION:
                return (
                    f"{detail['verdict']}: vehicle {detail['emitter']} claimed "
                    f"{detail['claimed']} in frame {detail['frame']}"
                )
            if code is EventCode.STOP:
                return f"stop on {', '.join(detail['predicates'])}"
            if code is EventCode.EXCL_REPORT:
                body = detail.get("body", {})
                halt = body.get("halt", {})
                return (
                    f"report of {body.get('certificate')} halted at "
                    f"{halt.get('position')} m, lane {halt.get('lane')}"
                )
        except KeyError:
            pass
        if not detail:
            return code.value
        return "\n".join(f"{key}: {value}" for key, value in detail.items())

    def show_run_info(self):
        """Show run totals and the per-subject overview."""
        self.console.print("\nRun Information", style="bold blue")
        info_table = Table(title="Trace")
        info_table.add_column("Property", style="cyan")
        info_table.add_column("Value", style="green")
        info_table.add_row("File", str(self.trace_path))
        info_table.add_row("Total Events", str(len(self.events)))
        if self.events:
            info_table.add_row("Last Event", _ms(self.events[-1].time_us))
        info_table.add_row("Trace Hash", trace_hash(self.events))
        self.console.print(info_table)

        code_table = Table(title="Event Codes", show_header=True, header_style="bold magenta")
        code_table.add_column("Code", style="cyan")
        code_table.add_column("Count", justify="right")
        for code, count in sorted(Counter(e.code.value for e in self.events).items()):
            code_table.add_row(code, str(count))
        self.console.print(code_table)

    def list_subjects(self):
        self.console.print("\nSubjects", style="bold blue")
        table = Table(show_header=True, header_style="bold magenta")
        table.add_column("Subject", style="dim", width=10)
        table.add_column("Total Events", justify="right")
        table.add_column("Event Codes", style="green")
        for subject in sorted(self.subject_events):
            events = self.subject_events[subject]
            label = "run" if subject == GLOBAL_SUBJECT else str(subject)
            codes = sorted({e.code.value for e in events})
            table.add_row(label, str(len(events)), ", ".join(codes))
        self.console.print(table)

    def view_timeline(self, subject: int):
        if subject not in self.subject_events:
            self.console.print(f"Subject {subject} not found.", style="red")
            return
        events = self.subject_events[subject]
        self.console.print(f"\nTimeline for {subject}", style="bold blue")
        self.console.print(f"Showing {len(events)} events\n", style="dim")
        for event in events:
            self.console.print(
                Panel(
                    self._format_event(event),
                    title=f"{_ms(event.time_us)} | {event.code.value}",
                    title_align="left",
                    border_style=_BORDERS.get(event.code, "white"),
                )
            )

    def view_n2n(self, subject: int):
        """Show what one vehicle sent, accepted and flagged."""
        events = [
            e for e in self.subject_events.get(subject, []) if e.code in N2N_CODES
        ]
        self.console.print(f"\nN2N traffic of vehicle {subject}", style="bold blue")
        if not events:
            self.console.print("No N2N traffic found for this vehicle.", style="yellow")
            return
        table = Table(show_header=True, header_style="bold magenta")
        table.add_column("Time", justify="right")
        table.add_column("Code", style="cyan")
        table.add_column("Detail")
        for event in events:
            table.add_row(_ms(event.time_us), event.code.value, self._format_event(event))
        self.console.print(table)

    def view_security(self):
        """Violations, stops, exclusion reports and attack actions of the run."""
        events = [e for e in self.events if e.code in SECURITY_CODES]
        self.console.print("\nSecurity Events", style="bold blue")
        if not events:
            self.console.print("No security events in this run.", style="green")
            return
        table = Table(show_header=True, header_style="bold magenta")
        table.add_column("Time", justify="right")
        table.add_column("Subject", justify="right")
        table.add_column("Code", style="cyan")
        table.add_column("Detail")
        for event in events:
            table.add_row(
                _ms(event.time_us),
                str(event.subject),
                event.code.value,
                self._format_event(event),
            )
        self.console.print(table)

    def view_summary(self, subject: int):
        if subject not in self.subject_events:
            self.console.print(f"Subject {subject} not found.", style="red")
            return
        counts = Counter(e.code.value for e in self.subject_events[subject])
        table = Table(title=f"Subject {subject} Summary")
        table.add_column("Code", style="cyan")
        table.add_column("Count", style="green", justify="right")
        for code, count in sorted(counts.items()):
            table.add_row(code, str(count))
        self.console.print(table)

    def interactive_mode(self):
        self.console.print("Cohort-AVN trace viewer", style="bold green")
        commands = {
            "info": "Show run information",
            "list": "Show all subjects",
            "security": "Show security events",
            "timeline <id>": "View a subject's timeline",
            "n2n <id>": "View a vehicle's N2N traffic",
            "summary <id>": "View a subject's event counts",
            "quit": "Exit viewer",
        }
        views = {
            "timeline": self.view_timeline,
            "n2n": self.view_n2n,
            "summary": self.view_summary,
        }
        while True:
            self.console.print("\nAvailable Commands:", style="bold blue")
            for command, description in commands.items():
                self.console.print(f"• {command} - {description}")
            command = Prompt.ask("\nEnter command").strip().lower()
            if command in ("quit", "q"):
                self.console.print("Goodbye!", style="yellow")
                break
            if command == "info":
                self.show_run_info()
            elif command == "list":
                self.list_subjects()
            elif command == "security":
                self.view_security()
            else:
                parts = command.split()
                if len(parts) < 2 or parts[0] not in views:
                    self.console.print("Usage: <command> <id>", style="red")
                    continue
                try:
                    views[parts[0]](int(parts[1]))
                except ValueError:
                    self.console.print("Invalid id. Please enter a number.", style="red")


def quick_trace_view(
    trace_path: str | Path, subject: int | None = None, view_type: str = "summary"
):
    """Quick view of one subject, or of the run when no subject is given."""
    viewer = TraceViewer(trace_path)
    if view_type == "security":
        viewer.view_security()
    elif subject is None or view_type == "info":
        viewer.show_run_info()
    elif view_type == "timeline":
        viewer.view_timeline(subject)
    elif view_type == "n2n":
        viewer.view_n2n(subject)
    else:
        viewer.view_summary(subject)
