# Entry point for `uvicorn main:app`
from weyl_abc.main import app  # noqa: F401
