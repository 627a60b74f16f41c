from hypothesis import HealthCheck, settings

# Property tests share a process with numba-compiled code whose first call
# triggers JIT compilation; wall-clock deadlines would misfire on that.
settings.register_profile(
    "package",
    deadline=None,
    suppress_health_check=[HealthCheck.too_slow],
)
settings.load_profile("package")
