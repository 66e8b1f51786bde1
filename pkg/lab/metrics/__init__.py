from .services import domain_recall, harmonic, mca
from .models import REPORT_FIELDS, MetricsReport
from .serializers import read_reports, write_report, write_reports
