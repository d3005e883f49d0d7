import io
import logging
from typing import TYPE_CHECKING, List

from reportlab.lib import colors
from reportlab.lib.pagesizes import A4
from reportlab.lib.styles import ParagraphStyle, getSampleStyleSheet
from reportlab.lib.units import mm
from reportlab.platypus import PageBreak, Paragraph, SimpleDocTemplate, Spacer, Table, TableStyle

if TYPE_CHECKING:
    from src.harness import ExperimentResult

logger = logging.getLogger(__name__)

REPORT_METRICS = ("f1", "shd", "ntp", "nfp", "nfn", "tpr")


def _styles():
    styles = getSampleStyleSheet()
    heading_style = ParagraphStyle(
        "Heading",
        parent=styles["Heading1"],
        fontName="Helvetica-Bold",
        fontSize=16,
        spaceAfter=6,
    )
    body_style = ParagraphStyle(
        "Body",
        parent=styles["BodyText"],
        fontName="Helvetica",
        fontSize=10,
        leading=13,
    )
    return heading_style, body_style


def _metric_rows(result: "ExperimentResult", metric: str) -> List[List[str]]:
    from src.harness import metric_table

    table = result.aggregates
    if table.empty:
        return []
    wide = metric_table(table, metric, [p.label for p in result.spec.sweep])
    rows = [["point", *wide.columns]]
    for label, values in wide.iterrows():
        rows.append([str(label), *(f"{v:.4f}" for v in values)])
    return rows


def build_experiment_pdf(result: "ExperimentResult") -> bytes:
    """Summary PDF: experiment settings, then one mean/stderr table per metric.

    Built with ``invariant=1`` so identical results give byte-identical files.
    """
    spec = result.spec
    buf = io.BytesIO()
    doc = SimpleDocTemplate(buf, pagesize=A4,
                            rightMargin=20*mm, leftMargin=20*mm,
                            topMargin=20*mm, bottomMargin=20*mm,
                            invariant=1, title=f"tsbench {spec.name.value}")
    heading_style, body_style = _styles()

    failed = sum(1 for run in result.runs if run.error)
    story = [
        Paragraph(f"Experiment: {spec.name.value}", heading_style),
        Spacer(1, 4),
        Paragraph(
            f"{len(spec.sweep)} sweep point(s), {spec.scm_count} SCM(s) per point, "
            f"{spec.samples_per_dataset} samples per dataset, master seed {spec.master_seed}, "
            f"l_max {spec.l_max}.", body_style),
        Paragraph(f"Methods: {', '.join(spec.methods) or '(none)'}. Failed runs: {failed}.", body_style),
        Spacer(1, 8),
    ]

    for metric in REPORT_METRICS:
        rows = _metric_rows(result, metric)
        if not rows:
            story.append(Paragraph("(No scores recorded)", body_style))
            break
        story.append(Paragraph(metric.upper(), heading_style))
        table = Table(rows, hAlign="LEFT")
        table.setStyle(TableStyle([
            ("FONTNAME", (0, 0), (-1, 0), "Helvetica-Bold"),
            ("FONTSIZE", (0, 0), (-1, -1), 9),
            ("LINEBELOW", (0, 0), (-1, 0), 0.5, colors.grey),
        ]))
        story.append(table)
        story.append(Spacer(1, 8))
        if metric == "shd":
            story.append(PageBreak())

    doc.build(story)
    logger.info("Built experiment report for %s", spec.name.value)
    buf.seek(0)
    return buf.read()
