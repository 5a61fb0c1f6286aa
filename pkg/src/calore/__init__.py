"""
@file __init__.py
@brief Pacchetto calore: equazione del calore stocastica lineare su [0,1].
"""

__version__ = "0.1.0"
