# Generated by Django 4.2.10 on 2026-10-17 09:12

from django.db import migrations, models
import django.db.models.deletion
import experiments.models


class Migration(migrations.Migration):

    initial = True

    dependencies = [
    ]

    operations = [
        migrations.CreateModel(
            name='RunRecord',
            fields=[
                ('id', models.BigAutoField(auto_created=True, primary_key=True, serialize=False, verbose_name='ID')),
                ('run_id', models.CharField(max_length=255, unique=True)),
                ('group', models.CharField(blank=True, default='', help_text='Matrix invocation this run belongs to', max_length=255)),
                ('mode', models.CharField(choices=[('fp32', 'Full Precision'), ('qat_w', 'QAT Weights'), ('squat_s', 'QAT States'), ('qat_squat', 'QAT Weights and States'), ('ptq_w', 'PTQ Weights'), ('ptq_s', 'PTQ States'), ('ptq_ws', 'PTQ Weights and States')], max_length=20)),
                ('n_bits', models.PositiveSmallIntegerField(blank=True, null=True)),
                ('scheme', models.CharField(blank=True, choices=[('uniform', 'Uniform'), ('exponential', 'Exponential')], max_length=20, null=True)),
                ('trial', models.PositiveSmallIntegerField(default=0)),
                ('seed', models.BigIntegerField()),
                ('config', models.JSONField(help_text='Validated experiment configuration echo')),
                ('epochs_run', models.PositiveIntegerField(default=0)),
                ('best_accuracy', models.FloatField(validators=[experiments.models.validate_accuracy])),
                ('best_epoch', models.IntegerField(blank=True, null=True)),
                ('wall_time', models.FloatField(default=0.0, help_text='Seconds')),
                ('grid_snapshots', models.JSONField(blank=True, default=dict)),
                ('checkpoint_path', models.CharField(blank=True, default='', max_length=1024)),
                ('created_at', models.DateTimeField(auto_now_add=True)),
            ],
            options={
                'ordering': ['group', 'mode', 'n_bits', 'scheme', 'trial'],
            },
        ),
        migrations.CreateModel(
            name='EpochMetric',
            fields=[
                ('id', models.BigAutoField(auto_created=True, primary_key=True, serialize=False, verbose_name='ID')),
                ('epoch', models.PositiveIntegerField()),
                ('split', models.CharField(choices=[('train', 'Train'), ('test', 'Test')], max_length=5)),
                ('loss', models.FloatField(blank=True, null=True)),
                ('accuracy', models.FloatField(validators=[experiments.models.validate_accuracy])),
                ('lr', models.FloatField(blank=True, null=True)),
                ('run', models.ForeignKey(on_delete=django.db.models.deletion.CASCADE, related_name='epoch_metrics', to='experiments.runrecord')),
            ],
            options={
                'ordering': ['run', 'epoch', 'split'],
                'unique_together': {('run', 'epoch', 'split')},
            },
        ),
    ]
