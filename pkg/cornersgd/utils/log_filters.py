from django_guid.log_filters import CorrelationId

NO_RUN = "-"


class RunCorrelationId(CorrelationId):
    """Fingerprint of the current command run, or "-" for code called outside one."""

    def filter(self, record):
        super().filter(record)
        if getattr(record, self.correlation_id_field, None) is None:
            setattr(record, self.correlation_id_field, NO_RUN)
        return True
