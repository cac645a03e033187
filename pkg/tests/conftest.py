from hypothesis import settings

# Fixed example generation so repeated runs see the same cases.
settings.register_profile("repro", derandomize=True, print_blob=True)
settings.load_profile("repro")
