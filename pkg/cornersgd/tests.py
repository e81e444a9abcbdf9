import logging

from django.test import SimpleTestCase
from django_guid import clear_guid, set_guid

from cornersgd.utils.log_filters import NO_RUN, RunCorrelationId


def make_record():
    return logging.LogRecord("app", logging.INFO, __file__, 1, "message", None, None)


class RunCorrelationIdTests(SimpleTestCase):
    def tearDown(self):
        clear_guid()

    def test_outside_a_run(self):
        clear_guid()
        record = make_record()
        self.assertTrue(RunCorrelationId().filter(record))
        self.assertEqual(record.correlation_id, NO_RUN)

    def test_inside_a_run(self):
        set_guid("0123abcd")
        record = make_record()
        RunCorrelationId().filter(record)
        self.assertEqual(record.correlation_id, "0123abcd")
