import logging
import sys

from fairpls import load_recipe, load_recipe_dataset
from fairpls.metrics import dataset_bias
from fairpls.recipe import list_recipes
from fairpls.utils import FairPlsError

logging.basicConfig(level=logging.DEBUG, stream=sys.stderr)
logger = logging.getLogger()

for name in list_recipes():
    try:
        data = load_recipe_dataset(load_recipe(name))
    except (FairPlsError, FileNotFoundError) as err:
        logger.warning(f"Skipping {name}: {err}")
        continue
    report = dataset_bias(data.target, data.sensitive, data.task)
    if data.task == "classification":
        logger.info(f"{name}: DI={report.di:.4f} [{report.di_ci_lo:.4f}, {report.di_ci_hi:.4f}] over {data.n} rows")
    else:
        logger.info(f"{name}: KS={report.ks:.4f} over {data.n} rows")
