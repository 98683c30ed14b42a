from . import ops, schemas
from .app import app, create_app

__all__ = ["app", "create_app", "ops", "schemas"]
