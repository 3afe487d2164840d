from .utils import *
from .scenario import *
from .report import *
from .commands import *
