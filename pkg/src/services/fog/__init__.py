"""Fog synthesis from depth maps and panel-contrast density calibration."""
