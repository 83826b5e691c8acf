from __future__ import annotations

from contextlib import asynccontextmanager
from typing import AsyncIterator

from fastapi import FastAPI
from fastapi.exceptions import RequestValidationError
from starlette.exceptions import HTTPException as StarletteHTTPException

from app.api.routes.fog import router as fog_router
from app.api.routes.metrics import router as metrics_router
from app.api.routes.monitoring import router as monitoring_router
from app.api.routes.runs import router as runs_router
from app.core.config import settings
from app.core.errors import (
    CFDError,
    cfd_error_handler,
    http_exception_handler,
    unhandled_exception_handler,
    validation_exception_handler,
)
from app.core.logging import setup_logging
from app.db.session import init_db

setup_logging(settings.LOG_LEVEL)


@asynccontextmanager
async def lifespan(_: FastAPI) -> AsyncIterator[None]:
    init_db()
    yield


app = FastAPI(title="cfdstereo API", version="0.1.0", lifespan=lifespan)

# Handlers específicos
app.add_exception_handler(StarletteHTTPException, http_exception_handler)
app.add_exception_handler(RequestValidationError, validation_exception_handler)
app.add_exception_handler(CFDError, cfd_error_handler)

# Fallback genérico (sempre por último)
app.add_exception_handler(Exception, unhandled_exception_handler)


# ----------------- REGISTRO DE ROTAS -----------------
app.include_router(monitoring_router)
app.include_router(fog_router)
app.include_router(metrics_router)
app.include_router(runs_router)
