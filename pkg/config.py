#!/usr/bin/env python
# -*- coding: utf-8 -*-

"""
Configuración centralizada para el segmentador volumétrico voxelseg.
Este archivo contiene todas las constantes, rutas y parámetros por defecto
utilizados por el sistema (red, pérdida, CRF, entrenamiento y datos).
"""

import os
from dotenv import load_dotenv

# Variables de entorno desde .env (si existe)
load_dotenv()

# Rutas de archivos
BASE_DIR = os.path.dirname(os.path.abspath(__file__))
DATA_DIR = "datos"
OUTPUT_DIR = "salida"
CACHE_DIR = os.getenv("VOXELSEG_CACHE", os.path.join(BASE_DIR, "cache"))
LOG_DIR = os.getenv("VOXELSEG_LOG_DIR", os.path.join(BASE_DIR, "logs"))

# Formatos de archivo
VOLUME_MAGIC = b"VOLF"
VOLUME_VERSION = 1
VOLUME_EXTENSION = ".vol"
MASK_SUFFIX = "_mascara"
CHECKPOINT_MAGIC = b"V3D2D"
CHECKPOINT_VERSION = 1
# Límite de carga útil aceptado en un encabezado (protege contra dims absurdas)
VOLUME_MAX_BYTES = 8 * 1024 ** 3

# Ventana de intensidades en unidades Hounsfield
HU_MIN = -200.0
HU_MAX = 300.0

# Aumentación por rotación (grados)
ROTATION_ANGLES = [-30, -20, -10, 0, 10, 20, 30]
ROTATION_LIMIT = 30

# Configuración de la red (valores por defecto a escala 512)
NET_INPUT_HEIGHT = 512
NET_INPUT_WIDTH = 512
NET_INPUT_DEPTH = 38
NET_STAGES = 5
NET_CHANNELS = [16, 32, 64, 128, 256, 512]
NET_CONVS_PER_STAGE = 2
NET_DROPOUT_P = 0.5
NET_NUM_CLASSES = 2
NET_DTYPE = "float64"

# Batch normalization
BN_MOMENTUM = 0.1
BN_EPSILON = 1e-5

# Pérdida ponderada por bordes
LOSS_W0 = 20.0
LOSS_SIGMA = 30.0
LOSS_PROB_CLAMP = 1e-12
# Mapas de peso retenidos en memoria durante el entrenamiento
WEIGHT_CACHE_MAX_ENTRIES = 256

# CRF de la banda del borde
CRF_W1 = 2.0
CRF_W2 = 0.5
CRF_THETA_ALPHA = 0.01
CRF_THETA_BETA = 20.0
CRF_THETA_GAMMA = 20.0
CRF_NEIGHBORHOOD_RADIUS = 2  # ventana 5x5
CRF_BAND_WIDTH = 5
CRF_ITERATIONS = 5
CRF_MAX_BRUTE_FORCE = 20

# Umbral de binarización de mapas de probabilidad
PROB_THRESHOLD = 0.5

# Entrenamiento
TRAIN_OPTIMIZER = "adam"
TRAIN_LEARNING_RATE = 1e-4
TRAIN_MOMENTUM = 0.9
TRAIN_BETA1 = 0.9
TRAIN_BETA2 = 0.999
TRAIN_ADAM_EPS = 1e-8
TRAIN_MAX_EPOCHS = 100
TRAIN_PATIENCE = 10
TRAIN_BATCH_SIZE = 1

# Validación cruzada
FOLDS_K = 5
FOLDS_VALIDATION = 2

# Semilla global
SEED = 0

# Reporte de tiempos (convención de 100 rebanadas de 512x512)
TIMING_SLICES = 100
TIMING_HEIGHT = 512
TIMING_WIDTH = 512

# Suite de gradientes
GRADCHECK_STEP = 1e-6
GRADCHECK_TOLERANCE = 1e-4

# Hilos por defecto para la inferencia por rebanada
THREADS = 1
