"""Sweep chart rendering."""

from PIL import ImageFont

from rnsckks.bench import STATUS_FAILED, STATUS_SKIPPED, Report, _row
from rnsckks.sweep_chart import SweepChart


def chart_report():
    timed = {'median_ns': 1000, 'min_ns': 900, 'p99_ns': 1500}
    fast = {'median_ns': 400, 'min_ns': 380, 'p99_ns': 420}
    return Report('bconv', rows=[
        _row('bconv', 54, {'l_t': 3, 'n_t': 4}, stats=timed),
        _row('bconv', 54, {'l_t': 1, 'n_t': 2}, stats=fast),
        _row('bconv', 28, {'l_t': 4, 'n_t': 8}, status=STATUS_SKIPPED, reason='group width 2048'),
        _row('bconv', 28, {'l_t': 1, 'n_t': 1}, status=STATUS_FAILED, reason='output differs'),
    ])


def test_render_grayscale_image():
    image = SweepChart(width=800).render(chart_report())
    assert image.mode == 'L'
    assert image.size[0] == 800
    # two level headers, four rows
    assert image.size[1] > 2 * 30 + 4 * 18
    # the fastest bar is drawn black
    assert min(image.getdata()) == 0


def test_render_empty_report():
    image = SweepChart().render(Report('ntt'))
    assert image.size == (900, 80)


def test_save_png(tmp_path):
    path = tmp_path / 'chart.png'
    assert SweepChart().save(chart_report(), str(path))
    assert path.stat().st_size > 0


def test_save_failure_returns_false(tmp_path):
    assert not SweepChart().save(chart_report(), str(tmp_path / 'missing' / 'chart.png'))


def test_font_fallback(monkeypatch):
    real_truetype = ImageFont.truetype

    def no_system_fonts(font, *args, **kwargs):
        if isinstance(font, str):
            raise OSError("cannot open resource")
        return real_truetype(font, *args, **kwargs)

    monkeypatch.setattr(ImageFont, 'truetype', no_system_fonts)
    chart = SweepChart()
    assert chart.font_label is not None
    assert chart.render(chart_report()).mode == 'L'


def test_labels_accept_serialized_params():
    row = {'params': '{"n1": 128, "g": 8}'}
    assert SweepChart._label(row) == 'n1=128 g=8'
