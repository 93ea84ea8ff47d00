"""
Sweep Chart
===========
Renders a sweep report as a horizontal bar chart of median latency per
configuration, one block per level, with the fastest configuration marked.
"""

import json
import logging

from PIL import Image, ImageDraw, ImageFont

logger = logging.getLogger(__name__)

BAR_HEIGHT = 18
ROW_GAP = 6
MARGIN = 16
LABEL_WIDTH = 300


class SweepChart:
    """Grayscale bar chart of a Report"""

    def __init__(self, width=900):
        self.width = width
        self.font_title = self._load_font(20)
        self.font_label = self._load_font(12)

    def _load_font(self, size):
        font_paths = [
            "/usr/share/fonts/truetype/dejavu/DejaVuSans.ttf",
            "/usr/share/fonts/truetype/liberation/LiberationSans-Regular.ttf",
            "/usr/share/fonts/truetype/noto/NotoSans-Regular.ttf",
        ]
        for font_path in font_paths:
            try:
                return ImageFont.truetype(font_path, size)
            except OSError:
                continue
        return ImageFont.load_default()

    @staticmethod
    def _label(row):
        params = row['params']
        if isinstance(params, str):
            params = json.loads(params)
        return ' '.join(f"{k}={v}" for k, v in params.items())

    def render(self, report):
        """PIL image of the report; skipped and failed rows are listed under their level"""
        levels = []
        for row in report.rows:
            if row['level'] not in levels:
                levels.append(row['level'])
        line = BAR_HEIGHT + ROW_GAP
        height = MARGIN * 2 + 30 + sum(30 + line * sum(1 for r in report.rows if r['level'] == lv)
                                       for lv in levels)
        image = Image.new('L', (self.width, max(height, 80)), 255)
        draw = ImageDraw.Draw(image)
        draw.text((MARGIN, MARGIN), f"{report.op} sweep (median ns)", fill=0, font=self.font_title)

        y = MARGIN + 30
        bar_space = self.width - LABEL_WIDTH - 2 * MARGIN - 90
        for level in levels:
            rows = [r for r in report.rows if r['level'] == level]
            timed = [r for r in rows if r['valid'] and r['median_ns'] is not None]
            draw.text((MARGIN, y), f"L = {level}", fill=0, font=self.font_title)
            y += 30
            longest = max((r['median_ns'] for r in timed), default=1) or 1
            fastest = min(timed, key=lambda r: r['median_ns']) if timed else None
            for row in rows:
                draw.text((MARGIN, y + 3), self._label(row), fill=0, font=self.font_label)
                x0 = MARGIN + LABEL_WIDTH
                if row in timed:
                    x1 = x0 + max(1, int(bar_space * row['median_ns'] / longest))
                    shade = 0 if row is fastest else 140
                    draw.rectangle([x0, y, x1, y + BAR_HEIGHT], fill=shade)
                    draw.text((x1 + 6, y + 3), str(row['median_ns']), fill=0, font=self.font_label)
                else:
                    note = f"{row['status']}: {row['reason'] or 'not timed'}"
                    draw.text((x0, y + 3), note, fill=0, font=self.font_label)
                y += line
        return image

    def save(self, report, path):
        try:
            self.render(report).save(path)
            logger.info(f"Sweep chart written to {path}")
            return True
        except (OSError, ValueError) as e:
            logger.error(f"Error writing sweep chart {path}: {e}")
            return False
