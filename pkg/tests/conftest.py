from pathlib import Path

import numpy as np
import pytest

DATA = Path(__file__).parent / "data"


def natural_images() -> dict[str, np.ndarray]:
    """Three 512x512 grayscale test images with peak 255."""
    from skimage import color, data

    from steinblock.io import read_image

    astro = np.rint(color.rgb2gray(data.astronaut()) * 255.0)
    return {
        "barbara": read_image(DATA / "barbara512.pgm"),
        "camera": data.camera().astype(float),
        "astronaut": astro,
    }


@pytest.fixture(scope="session")
def images():
    return natural_images()


@pytest.fixture(scope="session")
def barbara():
    from steinblock.io import read_image

    return read_image(DATA / "barbara512.pgm")


def pytest_terminal_summary(terminalreporter):
    from test_acceptance import RESULTS

    if RESULTS:
        terminalreporter.section("acceptance criteria")
        for text in RESULTS:
            terminalreporter.write_line(text)
