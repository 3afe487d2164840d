from .config import *
from .domain import *
from .exceptions import *
