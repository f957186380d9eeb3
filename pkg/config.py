"""Shared process settings for fusionkd runs."""

from __future__ import annotations

import os

from dotenv import find_dotenv, load_dotenv

load_dotenv(find_dotenv())

OUTPUT_FOLDER = os.getenv("OUTPUT_FILES_LOCATION") or "./outputs"
PRESETS_FOLDER = os.getenv("PRESETS_LOCATION", "./presets")

if OUTPUT_FOLDER and not OUTPUT_FOLDER.endswith(os.sep):
    OUTPUT_FOLDER += os.sep
if PRESETS_FOLDER and not PRESETS_FOLDER.endswith(os.sep):
    PRESETS_FOLDER += os.sep
