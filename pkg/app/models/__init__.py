from app.models.run import Run  # noqa: F401
