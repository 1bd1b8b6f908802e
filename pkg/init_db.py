import logging
import sys

from database import initialize_database

if __name__ == "__main__":
    logging.basicConfig(level=logging.INFO)
    url = sys.argv[1] if len(sys.argv) > 1 else None
    print("Initializing run registry...")
    initialize_database(url)
    print("Run registry ready. Tables 'runs' and 'metrics' created.")
