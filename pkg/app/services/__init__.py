from app.services.construction_service import make_schedule, run_construction

__all__ = ["make_schedule", "run_construction"]
