import os
import sys

from dotenv import load_dotenv
load_dotenv()

from config.config import DATA_ROOT, PROBLEM_DOMAINS, load_run_config
from pipeline.pipeline import CoherencePipeline
from utils.logger import get_logger
from utils.custom_exception import CustomException

logger = get_logger(__name__)


def main(raw_path: str = None, config_path: str = None):
    """Prepare the corpus under DATA_ROOT and build the pair datasets of every problem domain."""
    try:
        logger.info("Starting to build datasets")
        raw_path = raw_path or os.path.join(DATA_ROOT, "dailydialog")
        pipeline = CoherencePipeline(load_run_config(config_path))

        corpus_dir = os.path.join(DATA_ROOT, "processed")
        pipeline.prepare(raw_path, out=corpus_dir)
        logger.info("Corpus prepared")

        for domain in PROBLEM_DOMAINS:
            pipeline.perturb(corpus_dir, domain, out=os.path.join(DATA_ROOT, "pairs", domain))
            logger.info(f"{domain.upper()} pairs built")

        logger.info("Datasets built")
    except CustomException:
        raise
    except Exception as e:
        logger.error(f"Failed to build datasets {str(e)}")
        raise CustomException("Error during dataset building", e)


if __name__ == "__main__":
    main(*sys.argv[1:2])
