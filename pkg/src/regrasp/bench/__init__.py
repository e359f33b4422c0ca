from regrasp.bench.objects import OBJECTS, load_object
from regrasp.bench.report import aggregate, emit_reports, read_csv, write_csv
from regrasp.bench.run import TrialSpec, build_context, cell_yaws, run_campaign, run_trial
