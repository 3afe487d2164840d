from .cost_model import *
from .site_selector import *
from .queue_manager import *
from .bulk_scheduler import *
from .migrator import *
from .overlay import *
from .workload import *
from .metrics import *
from .engine import *
