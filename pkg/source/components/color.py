import colorsys

# Most important feature red, least important blue
HUE_FIRST, HUE_LAST = 0.0, 0.66
SATURATION = 0.55
BRIGHTNESS = 0.95


def hsv_to_hex(h: float, s: float, v: float) -> str:
    """
    HSV color as a '#rrggbb' string for Tk canvases (and hence the exported SVG).
    """
    r, g, b = colorsys.hsv_to_rgb(h, s, v)
    return f"#{round(r * 255):02x}{round(g * 255):02x}{round(b * 255):02x}"


def rank_palette(count: int, hue_first: float = HUE_FIRST, hue_last: float = HUE_LAST) -> list[str]:
    """
    One fill color per rank, hue interpolated linearly from the first to the last rank.

    Parameters:
        count (int): Number of ranks.
        hue_first (float): Hue of rank 1 in [0.0, 1.0].
        hue_last (float): Hue of the last rank in [0.0, 1.0].

    Returns:
        list[str]: Hex colors in rank order.
    """
    steps = max(1, count - 1)
    return [hsv_to_hex(hue_first + (hue_last - hue_first) * (i / steps), SATURATION, BRIGHTNESS)
            for i in range(count)]
