import sys, os
sys.path.append(os.pardir)
import json

import pandas as pd

COLUMNS = ['metric', 'threshold', 'value', 'n_items']


def metric_row(metric, value, n_items, threshold=None):
    return {'metric': metric, 'threshold': threshold, 'value': float(value), 'n_items': int(n_items)}


def write_report(rows, prefix, meta=None):
    ''' writes <prefix>.json and <prefix>.csv, returns both paths '''
    directory = os.path.dirname(prefix)
    if directory:
        os.makedirs(directory, exist_ok=True)
    report = dict(meta or {})
    report['metrics'] = rows
    json_path, csv_path = prefix + '.json', prefix + '.csv'
    with open(json_path, 'w') as f:
        json.dump(report, f, indent=2)
    pd.DataFrame(rows, columns=COLUMNS).to_csv(csv_path, index=False)
    print('saved report to {} and {}'.format(json_path, csv_path), flush=True)
    return json_path, csv_path


def print_report(rows):
    print(pd.DataFrame(rows, columns=COLUMNS).to_string(index=False), flush=True)
