# app/repositories/__init__.py
