"""Reference numbers reported for the four-transmitter 802.15.4 testbed.

Keys of the throughput tables are the number of active users M. Resolution
entries map a scenario label to ``(measured, model)``.
"""

MAC_THROUGHPUT_REF = {4: 0.875, 3: 0.8344, 2: 0.7917}
MEASURED_THROUGHPUT_REF = {4: 0.5837, 3: 0.6926, 2: 0.7273}
MODEL_THROUGHPUT_REF = {4: 0.6026, 3: 0.6465, 2: 0.7495}

RESOLUTION_REF = {
    "2221": (1.0, 0.9997),
    "221": (0.98, 0.9954),
    "21": (0.9, 0.9324),
    "3321": (0.9, 0.8757),
    "3221": (0.82, 0.7498),
    "321": (0.74, 0.7024),
    "3311": (0.98, 0.9391),
    "3121": (0.9, 0.9324),
    "311": (0.87, 0.7532),
    "44211": (0.84, 0.8643),
    "4321": (0.59, 0.5125),
    "4311": (0.56, 0.5496),
    "422121": (0.88, 0.9282),
    "42121": (0.81, 0.8695),
    "42211": (0.7, 0.7263),
    "4211": (0.64, 0.6804),
    "4111": (0.66, 0.7297),
}

CALIBRATION_TARGETS = {"21": 0.9324, "221": 0.9954}

SLOTTED_ALOHA_PEAK = 0.368
SLOT_DURATION_MS = 4.0
