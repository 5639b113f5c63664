# app/utils/config_loader.py

import os
from dotenv import load_dotenv

load_dotenv()  # Load variables from .env


class Config:
    """
    Loads environment-driven defaults. CLI flags override these.
    """
    def __init__(self):
        self.DEFAULT_OUTPUT_DIR = os.getenv("SIGNAL_OUTPUT_DIR", "outputs")
        self.LOG_LEVEL = os.getenv("SIGNAL_LOG_LEVEL", "INFO").upper()
        self.DEFAULT_POLICY = os.getenv("SIGNAL_DEFAULT_POLICY", "knee")


# Example usage
if __name__ == "__main__":
    config = Config()
    print("Output dir:", config.DEFAULT_OUTPUT_DIR)
    print("Log level:", config.LOG_LEVEL)
