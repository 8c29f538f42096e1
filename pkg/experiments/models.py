from django.db import models
from django.core.exceptions import ValidationError


def validate_accuracy(value):
    if value < 0 or value > 1:
        raise ValidationError('Accuracy must lie in [0, 1]')


class RunRecord(models.Model):
    MODES = [
        ('fp32', 'Full Precision'),
        ('qat_w', 'QAT Weights'),
        ('squat_s', 'QAT States'),
        ('qat_squat', 'QAT Weights and States'),
        ('ptq_w', 'PTQ Weights'),
        ('ptq_s', 'PTQ States'),
        ('ptq_ws', 'PTQ Weights and States'),
    ]
    SCHEMES = [
        ('uniform', 'Uniform'),
        ('exponential', 'Exponential'),
    ]

    run_id = models.CharField(max_length=255, unique=True)
    group = models.CharField(max_length=255, blank=True, default='', help_text="Matrix invocation this run belongs to")
    mode = models.CharField(max_length=20, choices=MODES)
    n_bits = models.PositiveSmallIntegerField(null=True, blank=True)
    scheme = models.CharField(max_length=20, choices=SCHEMES, null=True, blank=True)
    trial = models.PositiveSmallIntegerField(default=0)
    seed = models.BigIntegerField()
    config = models.JSONField(help_text="Validated experiment configuration echo")
    epochs_run = models.PositiveIntegerField(default=0)
    best_accuracy = models.FloatField(validators=[validate_accuracy])
    best_epoch = models.IntegerField(null=True, blank=True)
    wall_time = models.FloatField(default=0.0, help_text="Seconds")
    grid_snapshots = models.JSONField(default=dict, blank=True)
    checkpoint_path = models.CharField(max_length=1024, blank=True, default='')
    created_at = models.DateTimeField(auto_now_add=True)

    class Meta:
        ordering = ['group', 'mode', 'n_bits', 'scheme', 'trial']

    def clean(self):
        super().clean()
        validate_accuracy(self.best_accuracy)
        configured = self.config.get('epochs') if isinstance(self.config, dict) else None
        if configured is not None and self.epochs_run > configured:
            raise ValidationError(f'{self.epochs_run} epochs recorded, only {configured} configured')

    def __str__(self):
        return f"{self.run_id} ({self.get_mode_display()})"


class EpochMetric(models.Model):
    SPLITS = [
        ('train', 'Train'),
        ('test', 'Test'),
    ]

    run = models.ForeignKey(RunRecord, on_delete=models.CASCADE, related_name='epoch_metrics')
    epoch = models.PositiveIntegerField()
    split = models.CharField(max_length=5, choices=SPLITS)
    loss = models.FloatField(null=True, blank=True)
    accuracy = models.FloatField(validators=[validate_accuracy])
    lr = models.FloatField(null=True, blank=True)

    class Meta:
        ordering = ['run', 'epoch', 'split']
        unique_together = ('run', 'epoch', 'split')

    def __str__(self):
        return f"{self.run.run_id} epoch {self.epoch} {self.split}"
