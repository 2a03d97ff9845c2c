from .forecaster import ForecastModel, build_forecaster, load_checkpoint, save_checkpoint
from .gcrnn import GCRNN
from .naive import HistoricalAverage, Persistence
from .stconv import STConv

__all__ = ["ForecastModel", "build_forecaster", "load_checkpoint", "save_checkpoint",
           "GCRNN", "STConv", "Persistence", "HistoricalAverage"]
