"""Módulos del segmentador volumétrico voxelseg."""
