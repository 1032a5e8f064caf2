#!/usr/bin/env python
# -*- coding: utf-8 -*-

"""
Paquete de configuración de logging para el segmentador volumétrico.
"""
