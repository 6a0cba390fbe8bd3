import hashlib
import uuid
from datetime import datetime


def hash_str(text: str) -> str:
    return hashlib.sha256(text.encode("utf-8")).hexdigest()


def generate_run_id(config_text: str | None = None, now: datetime | None = None) -> str:
    """run_<dd>_<mon>_<yyyy>_<hh-mm>_<am|pm>_<hash8>; the hash is of the config text."""
    now = now or datetime.now()
    stamp = now.strftime("%d_%b_%Y_%I-%M_%p").lower()
    suffix = hash_str(config_text)[:8] if config_text is not None else uuid.uuid4().hex[:8]
    return f"run_{stamp}_{suffix}"
