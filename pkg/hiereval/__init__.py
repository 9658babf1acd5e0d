# -*- coding: utf-8 -*-
"""
hiereval - оценка сегментации по иерархии объект / часть / подчасть:
таксономия, растеризация и геометрия масок, форматы датасета и предсказаний,
метрики (mIoU, SpCS, SeCS, точность распознавания), статистика и регрессия.
"""

from hiereval.config import ARTIFACT_VERSION as __version__

__all__ = ["__version__"]
