from peqes.stats.dsl import AnalysisPlan, parse
from peqes.stats.engine import Dataset, dataset_from_rows, execute_once

__all__ = ["AnalysisPlan", "parse", "Dataset", "dataset_from_rows", "execute_once"]
